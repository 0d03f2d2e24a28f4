"""reports — Run orchestration and deterministic report emission."""

from blayer_verify.reports.run_report import RunReport, export_plotdata
from blayer_verify.reports.pipeline import run

__all__ = ["RunReport", "export_plotdata", "run"]

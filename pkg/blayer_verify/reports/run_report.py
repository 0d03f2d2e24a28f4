"""
run_report — The self-describing result of one ``blayer-verify`` run.

A report carries every check verdict with its measurements and witness,
the artifact files written next to it, the hash of the config that
produced it and of every upstream artifact it consumed, and the verbatim
tolerance table.  Serialization is canonical (sorted keys, no wall-clock
values) so identical configs give byte-identical reports.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from blayer_verify.configs.constants import (
    EXIT_FAIL,
    EXIT_PASS,
    REPORT_FILE,
    REPORT_SCHEMA_VERSION,
    TOOL_VERSION,
)
from blayer_verify.core.verdicts import CheckResult, Verdict, to_jsonable
from blayer_verify.errors import MissingArtifactError, RejectedInputError

logger = logging.getLogger(__name__)

# tag → column names, in file order
PLOT_COLUMNS: dict[str, tuple[str, ...]] = {
    "evans": ("xi", "re_lambda", "im_lambda", "abs_D"),
    "resolvent": ("forcing", "rho", "Z_Linf", "slope"),
    "decay": ("t", "U_L2", "U_Linf", "zeta"),
}


@dataclass(frozen=True)
class PlotTable:
    """Columnar data behind one exported figure."""

    columns: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({"columns": list(self.columns), "rows": [list(r) for r in self.rows]})

    def to_text(self) -> str:
        lines = ["# " + " ".join(self.columns)]
        lines += [" ".join(_cell(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunReport:
    subcommand: str
    system: str
    config_hash: str
    stages: dict[str, dict[str, Any]]
    checks: dict[str, CheckResult]
    tolerances: dict[str, Any]
    artifacts: dict[str, str] = field(default_factory=dict)
    upstream: dict[str, dict[str, str]] = field(default_factory=dict)
    plots: dict[str, PlotTable] = field(default_factory=dict)
    tool_version: str = TOOL_VERSION

    @property
    def verdict(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks.values())

    @property
    def exit_code(self) -> int:
        return EXIT_FAIL if self.verdict is Verdict.FAIL else EXIT_PASS

    def failures(self) -> dict[str, CheckResult]:
        return {k: c for k, c in self.checks.items() if c.verdict is Verdict.FAIL}

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({
            "report_schema_version": REPORT_SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "subcommand": self.subcommand,
            "system": self.system,
            "config_hash": self.config_hash,
            "verdict": self.verdict.value,
            "checks": {k: c.to_dict() for k, c in self.checks.items()},
            "stages": self.stages,
            "artifacts": self.artifacts,
            "upstream": self.upstream,
            "tolerances": self.tolerances,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        """Write ``report.json`` atomically into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / REPORT_FILE
        _atomic_write_text(path, self.to_json())
        logger.info("Report written to %s (verdict %s)", path, self.verdict.value)
        return path


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


# ─── Plot data ────────────────────────────────────────────────

def _cell(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(_cell(v) for v in value)
    if value is None:
        return "nan"
    return f"{float(value):.12g}"


def export_plotdata(report: RunReport, tag: str, path: str | Path | None = None) -> str:
    """
    Columnar text (whitespace separated, one header line) for ``tag``.

    Known tags are ``evans`` (ξ̃, λ, |D|), ``resolvent`` (ρ, |Z|∞, fitted
    slope) and ``decay`` (t, |U|₂, |U|∞, ζ).  Written to ``path`` when given.
    """
    if tag not in PLOT_COLUMNS:
        raise RejectedInputError(f"unknown plot tag '{tag}'; choose from {sorted(PLOT_COLUMNS)}", tag=tag)
    table = report.plots.get(tag)
    if table is None:
        raise MissingArtifactError(f"report has no '{tag}' data; run the '{tag}' stage first", tag=tag)
    text = table.to_text()
    if path is not None:
        write_plotdata(table, path)
    return text


def write_plotdata(table: PlotTable, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(path, table.to_text())
    logger.debug("Plot data written to %s", path)
    return path


def plot_table(tag: str, rows: Sequence[Sequence[Any]]) -> PlotTable:
    return PlotTable(PLOT_COLUMNS[tag], tuple(tuple(r) for r in rows))


__all__ = ["PLOT_COLUMNS", "PlotTable", "RunReport", "export_plotdata", "plot_table", "write_plotdata"]

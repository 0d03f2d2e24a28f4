"""
pipeline — Dependency-ordered execution of the verification stages.

audit → profile → evans → symbol → resolvent → decay.  A stage that needs
the layer profile either reuses the one computed earlier in the same run
or imports ``profile.csv`` from the output directory, refusing a file
whose sidecar hash does not match the current profile section.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Callable

import numpy as np

from blayer_verify.configs.constants import (
    PIPELINE_ORDER,
    PROFILE_FILE,
    PROFILE_META_FILE,
    SUBCOMMANDS,
)
from blayer_verify.configs.settings import (
    RunConfig,
    config_hash,
    get_settings,
    section_hash,
    tolerance_table,
)
from blayer_verify.core.evans_engine import check_condition_D, evans_homotopy
from blayer_verify.core.hypothesis_audit import AuditReport, find_glancing_points, run_audit
from blayer_verify.core.model_core import catalog_get
from blayer_verify.core.profile_solver import (
    ProfileGrid,
    amplitude_homotopy,
    constant_profile,
    export_profile,
    import_profile,
    solve_profile,
)
from blayer_verify.core.resolvent_lab import run_resolvent_lab
from blayer_verify.core.semigroup_decay import run_decay
from blayer_verify.core.symbol_analysis import run_symbol
from blayer_verify.core.verdicts import CheckResult, Verdict
from blayer_verify.errors import ConfigSchemaError, MissingArtifactError, NumericalFailure
from blayer_verify.reports.run_report import PlotTable, RunReport, plot_table, write_plotdata
from blayer_verify.utils.fitting import bootstrap_seed

logger = logging.getLogger(__name__)

# stages that consume the layer profile
_NEEDS_PROFILE = ("evans", "resolvent", "decay")
# config section each stage's own artifact is hashed over
_STAGE_SECTION = {"audit": "system", "profile": "profile", "evans": "evans", "symbol": "symbol",
                  "resolvent": "resolvent", "decay": "decay"}


class Pipeline:
    """Mutable state of one run: the model, the profile and everything reported so far."""

    def __init__(self, config: RunConfig, out_dir: Path, workers: int):
        self.config = config
        self.out_dir = out_dir
        self.workers = workers
        sec = config.system
        self.system, self.endstate = catalog_get(
            sec.name, sec.params, None if sec.endstate is None else np.asarray(sec.endstate, dtype=float))
        self.audit: AuditReport | None = None
        self.profile: ProfileGrid | None = None
        self.stages: dict[str, dict[str, Any]] = {}
        self.checks: dict[str, CheckResult] = {}
        self.artifacts: dict[str, str] = {}
        self.upstream: dict[str, dict[str, str]] = {}
        self.plots: dict[str, PlotTable] = {}

    # ─── bookkeeping ───────────────────────────────────────────

    def _record(self, stage: str, checks: dict[str, CheckResult], body: dict[str, Any]) -> None:
        for name, check in checks.items():
            self.checks[f"{stage}.{name}"] = check
        self.stages[stage] = body
        self.upstream.setdefault(stage, {})["self"] = section_hash(self.config, _STAGE_SECTION[stage])

    def _skip(self, stage: str, note: str) -> None:
        logger.info("Stage %s not applicable: %s", stage, note)
        self._record(stage, {"skipped": CheckResult("skipped", Verdict.NOT_APPLICABLE, note=note)},
                     {"verdict": Verdict.NOT_APPLICABLE.value, "note": note})

    def _plot(self, tag: str, rows) -> None:
        self.plots[tag] = plot_table(tag, rows)
        name = f"plot-{tag}.dat"
        write_plotdata(self.plots[tag], self.out_dir / name)
        self.artifacts[f"plot-{tag}"] = name

    def require_profile(self, stage: str) -> ProfileGrid:
        """The profile of this run, else the matching ``profile.csv`` in the output directory."""
        expected = section_hash(self.config, "profile")
        if self.profile is None:
            path = self.out_dir / PROFILE_FILE
            meta_path = self.out_dir / PROFILE_META_FILE
            if not path.exists() or not meta_path.exists():
                raise MissingArtifactError(f"'{stage}' needs a profile; run the 'profile' stage first",
                                           artifact=str(path))
            found = json.loads(meta_path.read_text(encoding="utf-8")).get("section_hash", "")
            if found != expected:
                raise MissingArtifactError(
                    f"{path} was computed from a different profile section; rerun the 'profile' stage",
                    artifact=str(path), expected=expected, found=found)
            self.profile = import_profile(path, self.system, self.endstate)
            logger.info("Imported profile from %s", path)
        self.upstream.setdefault(stage, {})["profile"] = expected
        return self.profile

    # ─── stages ────────────────────────────────────────────────

    def audit_stage(self) -> None:
        self.audit = run_audit(self.system, self.endstate, self.config.sphere, self.profile)
        self._record("audit", self.audit.checks, self.audit.to_dict())

    def profile_stage(self) -> None:
        sec = self.config.profile
        if sec.boundary_data is None:
            self.profile = constant_profile(self.system, self.endstate, sec.length or 20.0,
                                            nodes=sec.nodes, stretch=sec.stretch)
        else:
            self.profile = solve_profile(self.system, self.endstate, np.asarray(sec.boundary_data, dtype=float),
                                         sec.length, sec.tol, nodes=sec.nodes, stretch=sec.stretch,
                                         homotopy_steps=sec.homotopy_steps)
        digest = section_hash(self.config, "profile")
        export_profile(self.profile, self.out_dir / PROFILE_FILE, section_hash=digest)
        self.artifacts["profile"] = PROFILE_FILE
        self.artifacts["profile_meta"] = PROFILE_META_FILE
        check = CheckResult("solve", Verdict.PASS, {"residual": self.profile.residual,
                                                     "spline_residual": self.profile.meta.get("spline_residual"),
                                                     "amplitude": self.profile.amplitude,
                                                     "theta": self.profile.theta})
        self._record("profile", {"solve": check}, {"verdict": check.verdict.value, **self.profile.to_dict()})

    def evans_stage(self) -> None:
        profile = self.require_profile("evans")
        sec = self.config.evans
        report = check_condition_D(self.system, profile, sec, winding_tol=self.config.tolerances.winding,
                                   workers=self.workers)
        checks = {"D": report.check}
        body = report.to_dict()
        if sec.amplitudes and self.config.profile.boundary_data is not None:
            profiles = amplitude_homotopy(self.system, self.endstate, profile.boundary_data, sec.amplitudes,
                                          nodes=self.config.profile.nodes, stretch=self.config.profile.stretch)
            trace = evans_homotopy(self.system, profiles, sec, winding_tol=self.config.tolerances.winding,
                                   workers=self.workers)
            body["homotopy"] = trace
            checks["homotopy"] = CheckResult("homotopy", Verdict.combine(Verdict(t["verdict"]) for t in trace),
                                             {"amplitudes": [t["amplitude"] for t in trace]})
        self._record("evans", checks, body)
        self._plot("evans", [(r.fp.xi.tolist(), r.fp.lam.real, r.fp.lam.imag, abs(r.value))
                             for r in report.samples])

    def symbol_stage(self) -> None:
        if self.audit is not None:
            glancing = list(self.audit.glancing)
            self.upstream.setdefault("symbol", {})["audit"] = section_hash(self.config, "system")
        elif self.system.d > 1:
            glancing = find_glancing_points(self.system, self.endstate, self.config.sphere)[0]
        else:
            glancing = []
        report = run_symbol(self.system, self.endstate, self.config.symbol, glancing=glancing,
                            gradient_tol=self.config.sphere.gradient_tol,
                            slack=self.config.tolerances.slope_slack, workers=self.workers)
        self._record("symbol", report.checks, report.to_dict())

    def resolvent_stage(self) -> None:
        profile = self.require_profile("resolvent")
        report = run_resolvent_lab(self.system, self.endstate, profile, self.config, workers=self.workers)
        self._record("resolvent", report.checks, report.to_dict())
        slopes = report.checks["basic-bounds"].measured.get("Z_Linf", {})
        self._plot("resolvent", [(f.forcing, f.rho, f.norms.get("Z", {}).get("Linf", float("nan")),
                                  slopes.get(f.forcing, {}).get("slope", float("nan")))
                                 for f in report.fields if f.beta == 0])

    def decay_stage(self) -> None:
        profile = self.require_profile("decay")
        report = run_decay(self.system, self.endstate, profile, self.config, workers=self.workers)
        self._record("decay", report.checks, report.to_dict())
        for name in ("nonlinear", "linearized", "s1"):
            series = report.series.get(name)
            if series is not None:
                zeta = series.zeta if series.zeta is not None else np.full(series.t.size, np.nan)
                self._plot("decay", list(zip(series.t, series.norm("L2"), series.norm("Linf"), zeta)))
                break

    def run_stage(self, stage: str) -> None:
        if self.system.hyperbolic_only and (stage == "profile" or stage in _NEEDS_PROFILE):
            self._skip(stage, f"{self.system.name} has no parabolic block")
            return
        handler: Callable[[], None] = getattr(self, f"{stage}_stage")
        logger.info("Stage %s on %s", stage, self.system.name)
        try:
            handler()
        except NumericalFailure as e:
            logger.error("Stage %s failed: %s", stage, e)
            raise
        logger.info("Stage %s finished", stage)

    def report(self, subcommand: str) -> RunReport:
        return RunReport(
            subcommand=subcommand,
            system=self.system.name,
            config_hash=config_hash(self.config),
            stages=self.stages,
            checks=self.checks,
            tolerances=tolerance_table(self.config),
            artifacts=dict(sorted(self.artifacts.items())),
            upstream=self.upstream,
            plots=self.plots,
            tool_version=get_settings().tool_version,
        )


def run(subcommand: str, config: RunConfig, *, out_dir: str | Path | None = None,
        workers: int | None = None) -> RunReport:
    """Run one stage (or ``all`` of them in dependency order) and write the report."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigSchemaError(f"unknown subcommand '{subcommand}'; choose from {', '.join(SUBCOMMANDS)}",
                                path="subcommand")
    settings = get_settings()
    target = Path(out_dir or config.out_dir or settings.out_dir)
    target.mkdir(parents=True, exist_ok=True)
    pipeline = Pipeline(config, target, settings.workers if workers is None else workers)
    stages = PIPELINE_ORDER if subcommand == "all" else (subcommand,)
    with bootstrap_seed(config.seed):
        for stage in stages:
            pipeline.run_stage(stage)
    report = pipeline.report(subcommand)
    report.write(target)
    logger.info("%s on %s: %s", subcommand, report.system, report.verdict.value)
    return report


__all__ = ["Pipeline", "run"]

"""
Settings — run configuration and process-level defaults.

A run is described by one JSON document.  ``load_config`` turns it into a
tree of frozen dataclasses, rejecting unknown keys and ill-typed values
before anything is computed.  Every field has a default, so ``{}`` with a
system name is a valid (minimal) config.

Process-level defaults (output directory, worker count) come from
``get_settings()`` and may be overridden through ``BLAYER_VERIFY_OUT`` and
``BLAYER_VERIFY_WORKERS``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import types
import typing
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any

from blayer_verify.configs import constants as c
from blayer_verify.errors import ConfigSchemaError

logger = logging.getLogger(__name__)


# ─── Sections ─────────────────────────────────────────────────

@dataclass(frozen=True)
class SystemSection:
    """Which catalog system, its parameters and the endstate U₊ (conservative variables)."""

    name: str = "isentropic-ns-2d"
    params: dict[str, float] = field(default_factory=dict)
    endstate: list[float] | None = None


@dataclass(frozen=True)
class ProfileSection:
    boundary_data: list[float] | None = None   # W̃-trace at x₁ = 0; None → constant layer
    length: float | None = None                # None → chosen from the endstate decay rate
    nodes: int = c.PROFILE_NODES
    stretch: float = c.PROFILE_STRETCH
    tol: float = c.PROFILE_TOL
    homotopy_steps: int = c.PROFILE_HOMOTOPY_STEPS


@dataclass(frozen=True)
class SpherePlan:
    """Discretization of the unit sphere used by the symbol audits."""

    samples_per_dim: int = c.SPHERE_SAMPLES_PER_DIM
    refinement_depth: int = c.SPHERE_REFINEMENT_DEPTH
    cluster_rel_tol: float = c.CLUSTER_RELATIVE_TOL
    gradient_tol: float = c.GRADIENT_TOL
    radius: float = 1.0
    sequence: str = "sobol"

    @property
    def samples(self) -> int:
        return self.samples_per_dim


@dataclass(frozen=True)
class EvansSection:
    radius: float = 1.0
    xi_max: float = 1.0
    xi_slices: int = 5
    rho_min: float = c.RHO_MIN
    contour_points: int = c.CONTOUR_POINTS
    refinements: int = c.CONTOUR_REFINEMENTS
    backend: str = "auto"
    re_offset: float = 1e-4
    theta_report: float = c.THETA_REPORT
    amplitudes: list[float] = field(default_factory=list)
    rtol: float = c.EVANS_RTOL
    atol: float = c.EVANS_ATOL


@dataclass(frozen=True)
class SymbolSection:
    rho_max_low: float = c.RHO_MAX_LOW
    rho_sweep: list[float] = field(default_factory=lambda: [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    sigma_values: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    sigma_exponents: list[int] = field(default_factory=lambda: list(range(4, 17)))


@dataclass(frozen=True)
class Contour:
    """Parabolic contour λ(ξ̃, k) = ik − θ₁(k² + |ξ̃|²), |k| ≤ k_max."""

    theta1: float = c.THETA1
    k_max: float = 0.2


@dataclass(frozen=True)
class ResolventSection:
    rho_floor: float = c.RHO_FLOOR
    rho_max: float = 1e-1
    sweep_points: int = 9
    epsilon_report: float = c.EPSILON_REPORT
    forcings: list[str] = field(default_factory=lambda: ["exp-1", "bump", "boundary-bump"])
    p_values: list[float] = field(default_factory=lambda: [2.0, float("inf")])
    mode: str = "H4prime"
    nodes: int = 2000
    length: float | None = None
    direction: list[float] = field(default_factory=lambda: [0.6, 0.8])


@dataclass(frozen=True)
class QuadratureSpec:
    """Node layout for the low-frequency contour integral."""

    r: float = 0.2
    k_max: float = 0.2
    k_panels: int = 6
    xi_panels: int = 6
    order: int = c.GAUSS_ORDER
    x_tilde_max: float = 200.0
    x_tilde_points: int = 401
    rule: str = "graded-gauss"


@dataclass(frozen=True)
class DecaySection:
    nx: int = 128
    ny: int = 128
    length_x: float = 40.0
    length_y: float = 80.0
    t_final: float = 20.0
    samples: int = 40
    amplitude: float = 1e-3
    cfl: float = c.CFL_NUMBER
    nonlinear: bool = True
    duhamel_times: list[float] = field(default_factory=lambda: [2.5, 5.0, 10.0])
    s1_times: list[float] = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0, 80.0])
    dimension: int = 2
    epsilon: float = c.EPSILON_REPORT


@dataclass(frozen=True)
class Tolerances:
    """Pass/fail slack applied to fitted exponents and residual checks."""

    slope_slack: float = c.SLOPE_SLACK
    residual: float = 1e-8
    winding: float = c.WINDING_TOL
    condition_max: float = c.RESOLVENT_CONDITION_MAX
    fit_ratio_min: float = c.FIT_WINDOW_RATIO_MIN


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; hashed to identify artifacts."""

    schema_version: int = c.CONFIG_SCHEMA_VERSION
    system: SystemSection = field(default_factory=SystemSection)
    profile: ProfileSection = field(default_factory=ProfileSection)
    sphere: SpherePlan = field(default_factory=SpherePlan)
    evans: EvansSection = field(default_factory=EvansSection)
    symbol: SymbolSection = field(default_factory=SymbolSection)
    contour: Contour = field(default_factory=Contour)
    resolvent: ResolventSection = field(default_factory=ResolventSection)
    quadrature: QuadratureSpec = field(default_factory=QuadratureSpec)
    decay: DecaySection = field(default_factory=DecaySection)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = c.BOOTSTRAP_SEED
    out_dir: str | None = None


# ─── Schema validation ────────────────────────────────────────

_BACKENDS = {"auto", "compound", "orthogonal"}
_LP_MODES = {"H4prime", "H4"}
_SEQUENCES = {"sobol", "halton"}


def _coerce(value: Any, hint: Any, path: str) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)

    if dataclasses.is_dataclass(hint):
        if not isinstance(value, dict):
            raise ConfigSchemaError(f"{path}: expected an object", path=path)
        return _build(hint, value, path)

    if origin is list:
        if not isinstance(value, list):
            raise ConfigSchemaError(f"{path}: expected a list", path=path)
        return [_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value)]

    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigSchemaError(f"{path}: expected an object", path=path)
        return {str(k): _coerce(v, args[1], f"{path}.{k}") for k, v in value.items()}

    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigSchemaError(f"{path}: expected a boolean", path=path)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigSchemaError(f"{path}: expected an integer", path=path)
        return value
    if hint is float:
        if isinstance(value, str) and value in ("inf", "Infinity"):
            return float("inf")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigSchemaError(f"{path}: expected a number", path=path)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigSchemaError(f"{path}: expected a string", path=path)
        return value
    return value


def _build(cls: type, data: dict[str, Any], path: str) -> Any:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigSchemaError(
            f"unknown key '{where}{unknown[0]}'", path=f"{where}{unknown[0]}", unknown=unknown
        )
    kwargs = {
        name: _coerce(value, hints[name], f"{path}.{name}" if path else name)
        for name, value in data.items()
    }
    return cls(**kwargs)


def _validate(config: RunConfig) -> None:
    if config.schema_version != c.CONFIG_SCHEMA_VERSION:
        raise ConfigSchemaError(
            f"schema_version {config.schema_version} is not supported "
            f"(expected {c.CONFIG_SCHEMA_VERSION})",
            path="schema_version",
        )
    d = config.sphere
    if d.samples_per_dim < 100:
        raise ConfigSchemaError("sphere.samples_per_dim must be ≥ 100", path="sphere.samples_per_dim")
    if d.cluster_rel_tol <= 0 or d.gradient_tol <= 0:
        raise ConfigSchemaError("sphere tolerances must be positive", path="sphere")
    if d.sequence not in _SEQUENCES:
        raise ConfigSchemaError(f"sphere.sequence must be one of {sorted(_SEQUENCES)}", path="sphere.sequence")
    if config.evans.backend not in _BACKENDS:
        raise ConfigSchemaError(f"evans.backend must be one of {sorted(_BACKENDS)}", path="evans.backend")
    if config.evans.rho_min <= 0:
        raise ConfigSchemaError("evans.rho_min must be positive", path="evans.rho_min")
    if config.resolvent.mode not in _LP_MODES:
        raise ConfigSchemaError(f"resolvent.mode must be one of {sorted(_LP_MODES)}", path="resolvent.mode")
    if not 0 < config.resolvent.epsilon_report < 0.5:
        raise ConfigSchemaError("resolvent.epsilon_report must lie in (0, 1/2)", path="resolvent.epsilon_report")
    if not 0 < config.resolvent.rho_floor < config.resolvent.rho_max:
        raise ConfigSchemaError("resolvent.rho_floor must lie in (0, rho_max)", path="resolvent.rho_floor")
    if config.contour.theta1 <= 0:
        raise ConfigSchemaError("contour.theta1 must be positive", path="contour.theta1")
    if config.profile.nodes < 10:
        raise ConfigSchemaError("profile.nodes must be ≥ 10", path="profile.nodes")
    if config.decay.dimension not in (2, 3):
        raise ConfigSchemaError("decay.dimension must be 2 or 3", path="decay.dimension")
    if not 0 < config.decay.cfl <= 1:
        raise ConfigSchemaError("decay.cfl must lie in (0, 1]", path="decay.cfl")


def parse_config(data: Any) -> RunConfig:
    """Validate an already-decoded JSON document."""
    if not isinstance(data, dict) or not data:
        raise ConfigSchemaError("config must be a non-empty JSON object", path="")
    if "system" not in data:
        raise ConfigSchemaError("config is missing the required 'system' section", path="system")
    config = _build(RunConfig, data, "")
    _validate(config)
    return config


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a run config file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigSchemaError(f"config file not found: {path}", path=str(path)) from e
    except json.JSONDecodeError as e:
        raise ConfigSchemaError(f"config is not valid JSON: {e}", path=str(path)) from e
    config = parse_config(data)
    logger.info("Loaded config %s (hash %s)", path, config_hash(config)[:12])
    return config


# ─── Hashing ──────────────────────────────────────────────────

def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON (defaults filled in, keys sorted)."""
    return hashlib.sha256(_canonical(dataclasses.asdict(config)).encode()).hexdigest()


# upstream sections each artifact depends on
_SECTION_DEPENDENCIES: dict[str, tuple[str, ...]] = {
    "system": ("system",),
    "profile": ("system", "profile"),
    "evans": ("system", "profile", "evans"),
    "symbol": ("system", "symbol"),
    "resolvent": ("system", "profile", "contour", "resolvent"),
    "decay": ("system", "profile", "contour", "quadrature", "decay"),
}


def section_hash(config: RunConfig, name: str) -> str:
    """Hash of the sections an artifact named ``name`` was computed from."""
    try:
        deps = _SECTION_DEPENDENCIES[name]
    except KeyError:
        raise ConfigSchemaError(f"no artifact section named '{name}'", path=name) from None
    payload = {dep: dataclasses.asdict(getattr(config, dep)) for dep in deps}
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def tolerance_table(config: RunConfig) -> dict[str, Any]:
    """Verbatim tolerance values embedded in every report."""
    return {
        "tolerances": dataclasses.asdict(config.tolerances),
        "sphere": {
            "cluster_rel_tol": config.sphere.cluster_rel_tol,
            "gradient_tol": config.sphere.gradient_tol,
        },
        "profile_tol": config.profile.tol,
        "rho_min": config.evans.rho_min,
        "theta_report": config.evans.theta_report,
        "rho_floor": config.resolvent.rho_floor,
        "epsilon_report": config.resolvent.epsilon_report,
        "theta1": config.contour.theta1,
        "cfl": config.decay.cfl,
    }


# ─── Process settings ─────────────────────────────────────────

@dataclass(frozen=True)
class Settings:
    """Immutable process-level defaults."""

    out_dir: str = field(
        default_factory=lambda: os.environ.get("BLAYER_VERIFY_OUT", c.DEFAULT_OUT_DIR)
    )
    workers: int = field(
        default_factory=lambda: int(os.environ.get("BLAYER_VERIFY_WORKERS", "1"))
    )
    tool_version: str = field(default=c.TOOL_VERSION)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return a cached, frozen Settings instance (created once per process)."""
    return Settings()

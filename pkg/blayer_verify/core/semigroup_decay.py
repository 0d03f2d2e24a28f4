"""
semigroup_decay — Decay of perturbations of the layer.

Two independent routes to e^{Lt}:

* the low-frequency operator S₁(t), a tensor-product quadrature of the
  inverse Laplace–Fourier integral over the parabolic contour
  λ = ik − θ₁(k² + |ξ̃|²), |k| ≤ k_max, and the tangential ball |ξ̃| ≤ r,
  with one resolvent solve per node;
* time stepping of the linearized and nonlinear perturbation equations on
  the truncated quarter-plane [0, L₁] × (periodic y), implicit in the
  viscous terms and explicit (local Lax–Friedrichs) in the convection.

Both produce ``DecaySeries``; ``fit_decay`` compares the fitted exponents
with ``decay_targets``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid
from scipy.special import gamma as gamma_fn
from scipy.special import roots_jacobi

from blayer_verify.configs.constants import (
    BLOWUP_FACTOR,
    CFL_NUMBER,
    EDGE_THRESHOLD,
    EPSILON_REPORT,
    FD_STEP_SCALE,
    FIT_WINDOW_RATIO_MIN,
    GAUSS_ORDER,
    SLOPE_SLACK,
    THETA1,
)
from blayer_verify.configs.settings import DecaySection, QuadratureSpec, RunConfig
from blayer_verify.core.evans_engine import LayerCoefficients, profile_direction
from blayer_verify.core.model_core import Endstate, SystemModel, jacobians
from blayer_verify.core.profile_solver import ProfileGrid
from blayer_verify.core.resolvent_lab import (
    Forcing,
    contour_point,
    make_forcing,
    resolvent_grid,
    solve_resolvent,
)
from blayer_verify.core.verdicts import CheckResult, Verdict, to_jsonable
from blayer_verify.errors import (
    CFLViolation,
    DomainReflectionError,
    NumericalFailure,
    QuadratureNonConvergence,
    RejectedInputError,
)
from blayer_verify.utils.fitting import FitResult, fit_exponential_rate, loglog_fit
from blayer_verify.utils.parallel import parallel_map
from blayer_verify.utils.quadrature import gauss_panels, graded_breaks, symmetric_graded_rule

logger = logging.getLogger(__name__)

Array = np.ndarray

REGIMES = ("linearized", "nonlinear", "two-dimensional", "low-frequency")
NORM_TAGS = ("L1", "L2", "Linf", "L2Linf", "L1Linf", "H1", "W1L2Linf")


# ─── Target exponents ─────────────────────────────────────────

def decay_targets(d: int, p: float = 2.0, regime: str = "linearized", epsilon: float = 0.0) -> dict[str, float]:
    """
    Exponents a in |U(t)| ≤ C(1+t)^a for each norm tag.

    linearized / nonlinear   d ≥ 3, zero boundary perturbations
    two-dimensional          d = 2, or any d under the weaker glancing hypothesis
    low-frequency            the S₁(t) part alone
    """
    if regime not in REGIMES:
        raise RejectedInputError(f"unknown decay regime '{regime}'; known: {', '.join(REGIMES)}")
    if d < 1:
        raise RejectedInputError("dimension must be ≥ 1")
    if p < 1:
        raise RejectedInputError("p must be ≥ 1")
    q = 0.0 if math.isinf(p) else 1.0 / p
    if regime == "low-frequency":
        half = 0.5 * epsilon
        return {
            "L2": -(d - 2) / 4 - half,
            "L2Linf": -(d - 1) / 4 - half,
            "Linf": -(d - 1) / 2 - half,
            "Lp": -(d - 1) / 2 * (1 - q) + q / 2 - half,
            "Hs": -(d - 2) / 4 - half,
        }
    if regime == "two-dimensional":
        lp = lambda s: -(d / 2) * (1 - s) + s / 2  # noqa: E731
        return {
            "L2": lp(0.5),
            "L2Linf": -(d - 1) / 4,
            "Linf": lp(0.0),
            "Lp": lp(q),
            "Hs": -(d - 1) / 4,
        }
    lp = lambda s: -(d - 1) / 2 * (1 - s) + s / 2 - epsilon  # noqa: E731
    return {
        "L2": lp(0.5),
        "L2Linf": -(d - 1) / 4 - epsilon,
        "Linf": lp(0.0),
        "Lp": lp(q),
        "Hs": -(d - 2) / 4 - epsilon,
    }


def _target_for(targets: dict[str, float], norm: str) -> float | None:
    alias = {"W1L2Linf": "L2Linf", "H1": "Hs", "L1Linf": None, "L1": None}
    key = alias.get(norm, norm)
    return None if key is None else targets.get(key)


# ─── Series ───────────────────────────────────────────────────

@dataclass(frozen=True)
class DecaySeries:
    """Norm samples of one trajectory, with ζ(t) when it was computed."""

    t: Array
    norms: dict[str, Array]
    zeta: Array | None = None
    meta: dict[str, Any] = field(default_factory=dict)
    snapshots: Array | None = None          # (len(t), nx, ny, n), only when kept

    def __post_init__(self) -> None:
        for tag, values in self.norms.items():
            if np.any(np.asarray(values) < 0):
                raise RejectedInputError(f"norm samples of {tag} must be nonnegative")

    def norm(self, tag: str) -> Array:
        if tag not in self.norms:
            raise RejectedInputError(f"series has no '{tag}' samples; available: {', '.join(self.norms)}")
        return np.asarray(self.norms[tag])

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    def rows(self) -> list[dict[str, float]]:
        out = []
        for i, t in enumerate(self.t):
            row = {"t": float(t)}
            row.update({tag: float(v[i]) for tag, v in self.norms.items()})
            if self.zeta is not None:
                row["zeta"] = float(self.zeta[i])
            out.append(row)
        return out

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({
            "t": self.t,
            "norms": self.norms,
            "zeta": self.zeta,
            "meta": self.meta,
        })


def bootstrap_functional(t: Array, norms: dict[str, Array], d: int, *, epsilon: float = EPSILON_REPORT,
                         regime: str = "nonlinear") -> Array:
    """
    ζ(t) = sup_{s ≤ t} max{ |U|₂(1+s)^{a₂}, |U|∞(1+s)^{a∞}, |(U, ∇U)|_{L^{2,∞}}(1+s)^{a_m} }

    with a = −(target exponent) of the regime.
    """
    targets = decay_targets(d, 2.0, regime, epsilon)
    s = 1.0 + np.asarray(t, dtype=float)
    terms = [
        np.asarray(norms["L2"]) * s ** (-targets["L2"]),
        np.asarray(norms["Linf"]) * s ** (-targets["Linf"]),
    ]
    if "W1L2Linf" in norms:
        terms.append(np.asarray(norms["W1L2Linf"]) * s ** (-targets["L2Linf"]))
    return np.maximum.accumulate(np.max(terms, axis=0))


def zeta_window_check(series: DecaySeries) -> CheckResult:
    """C fitted on t ≤ T/2, then ζ ≤ 2C|U₀| verified on t > T/2 with |U₀| = |U₀|_{L¹} + |U₀|_{H¹}."""
    if series.zeta is None or series.t.size < 3:
        return CheckResult("bootstrap-functional", Verdict.NOT_APPLICABLE, note="no ζ samples")
    size = float(series.norm("L1")[0] + series.norm("H1")[0])
    if size == 0.0:
        return CheckResult("bootstrap-functional", Verdict.NOT_APPLICABLE, note="zero data")
    half = series.t <= 0.5 * series.t_final
    C = float(np.max(series.zeta[half])) / size
    late = series.zeta[~half]
    ratio = float(np.max(late)) / (C * size) if late.size else 0.0
    measured = {"C": C, "U0_size": size, "late_ratio": ratio, "zeta_final": float(series.zeta[-1])}
    if series.meta.get("blowup"):
        return CheckResult("bootstrap-functional", Verdict.FAIL, measured,
                           witness={"blowup_time": series.meta.get("blowup_time")})
    verdict = Verdict.PASS if ratio <= 2.0 else Verdict.FAIL
    witness = None if verdict is Verdict.PASS else {"t": float(series.t[~half][int(np.argmax(late))])}
    return CheckResult("bootstrap-functional", verdict, measured, witness)


# ─── Exponent fits ────────────────────────────────────────────

@dataclass(frozen=True)
class DecayFit:
    series: str
    norm: str
    fit: FitResult
    target: float | None
    slack: float

    @property
    def exponent(self) -> float:
        return self.fit.slope

    @property
    def surplus(self) -> float | None:
        """target − fitted exponent; positive when the run decays faster than the target."""
        if self.target is None or not np.isfinite(self.fit.slope):
            return None
        return self.target - self.fit.slope

    @property
    def verdict(self) -> Verdict:
        if self.target is None:
            return Verdict.NOT_APPLICABLE
        if self.fit.unreliable or not np.isfinite(self.fit.slope):
            return Verdict.INDETERMINATE
        return Verdict.PASS if self.fit.slope <= self.target + self.slack else Verdict.FAIL

    def check(self) -> CheckResult:
        measured = {**self.fit.to_dict(), "target": self.target, "slack": self.slack, "surplus": self.surplus}
        witness = None
        if self.verdict is Verdict.FAIL:
            witness = {"exponent": self.fit.slope, "bound": self.target + self.slack}
        return CheckResult(f"decay-fit:{self.series}:{self.norm}", self.verdict, measured, witness)

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({"series": self.series, "norm": self.norm, **self.check().to_dict()})


def fit_decay(series: DecaySeries, norm: str, window: tuple[float, float] | None = None, *,
              target: float | None = None, slack: float = SLOPE_SLACK,
              ratio_min: float = FIT_WINDOW_RATIO_MIN, name: str = "run") -> DecayFit:
    """Slope of log|U| against log(1 + t) over ``window`` (default: the last decade of samples)."""
    values = series.norm(norm)
    t = np.asarray(series.t, dtype=float)
    if window is None:
        hi = float(t[-1])
        window = (hi / ratio_min, hi)
    lo, hi = float(window[0]), float(window[1])
    if lo <= 0 or hi / lo < ratio_min * (1 - 1e-12):
        raise RejectedInputError(f"fit window [{lo:g}, {hi:g}] spans less than a factor {ratio_min:g}")
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12:
        raise RejectedInputError(f"fit window [{lo:g}, {hi:g}] lies outside the sampled times")
    keep = (t >= lo) & (t <= hi)
    fit = loglog_fit(1.0 + t[keep], values[keep], check_trend=True)
    fit = replace(fit, window=(lo, hi))
    logger.info("Decay fit %s/%s on [%.3g, %.3g]: exponent %.4f (target %s)",
                name, norm, lo, hi, fit.slope, "n/a" if target is None else f"{target:.4f}")
    return DecayFit(name, norm, fit, target, slack)


# ─── Quarter-plane grid ───────────────────────────────────────

@dataclass(frozen=True)
class QuarterPlane:
    """Cell-centred grid on [0, L₁] × [−L₂/2, L₂/2), periodic in y."""

    nx: int
    ny: int
    length_x: float
    length_y: float

    def __post_init__(self) -> None:
        if self.nx < 4 or self.ny < 4 or self.ny % 2:
            raise RejectedInputError("the quarter-plane grid needs nx, ny ≥ 4 with ny even")

    @classmethod
    def from_section(cls, section: DecaySection) -> "QuarterPlane":
        return cls(section.nx, section.ny, section.length_x, section.length_y)

    @property
    def hx(self) -> float:
        return self.length_x / self.nx

    @property
    def hy(self) -> float:
        return self.length_y / self.ny

    @property
    def x(self) -> Array:
        return (np.arange(self.nx) + 0.5) * self.hx

    @property
    def y(self) -> Array:
        return -0.5 * self.length_y + (np.arange(self.ny) + 0.5) * self.hy

    def gradient(self, U: Array) -> tuple[Array, Array]:
        Ux = np.gradient(U, self.hx, axis=0)
        Uy = (np.roll(U, -1, axis=1) - np.roll(U, 1, axis=1)) / (2.0 * self.hy)
        return Ux, Uy

    def norms(self, U: Array) -> dict[str, float]:
        """Discrete norms of a (nx, ny, n) field; mixed norms take the sup over x₁ first."""
        a = np.linalg.norm(U, axis=-1)
        Ux, Uy = self.gradient(U)
        g = np.sqrt(np.sum(Ux ** 2 + Uy ** 2, axis=-1))
        cell = self.hx * self.hy
        l2 = float(np.sqrt(np.sum(a * a) * cell))
        sup_x = np.max(a, axis=0)
        sup_w = np.max(a + g, axis=0)
        return {
            "L1": float(np.sum(a) * cell),
            "L2": l2,
            "Linf": float(np.max(a)),
            "L2Linf": float(np.sqrt(np.sum(sup_x ** 2) * self.hy)),
            "L1Linf": float(np.sum(sup_x) * self.hy),
            "H1": float(np.sqrt(l2 * l2 + np.sum(g * g) * cell)),
            "W1L2Linf": float(np.sqrt(np.sum(sup_w ** 2) * self.hy)),
        }


def _unit_gaussian(y: Array, width: float) -> Array:
    return np.exp(-(y / width) ** 2) / (width * np.sqrt(np.pi))


def initial_perturbation(system: SystemModel, grid: QuarterPlane, *, amplitude: float = 1.0,
                         vector: Any = None, center: float = 6.0, width: float = 3.0,
                         lateral_width: float = 4.0) -> tuple[Array, Forcing]:
    """
    U₀(x₁, y) = a·bump(x₁)·g(y)·v with g a unit-mass Gaussian.

    Returns the grid samples and the normal factor a·bump·v as a ``Forcing``,
    whose lateral transform is e^{−w²|ξ̃|²/4}.
    """
    n = system.n
    v = np.ones(n) / np.sqrt(n) if vector is None else np.asarray(vector, dtype=float)
    f1 = make_forcing("bump", n, amplitude * v, center=center, width=width)
    U0 = np.real(f1.value(grid.x))[:, None, :] * _unit_gaussian(grid.y, lateral_width)[None, :, None]
    return U0, f1


# ─── Quarter-plane stepper ────────────────────────────────────

def _block_tridiagonal(L: Array, C: Array, R: Array) -> sp.csc_matrix:
    """Sparse matrix with block rows (L_i, C_i, R_i) at columns (i−1, i, i+1)."""
    K, n, _ = C.shape
    a = np.arange(n)
    blk = np.arange(K)[:, None, None]
    rows = np.broadcast_to(blk * n + a[None, :, None], (K, n, n))
    cols = np.broadcast_to(blk * n + a[None, None, :], (K, n, n))
    data = [C.ravel(), L[1:].ravel(), R[:-1].ravel()]
    rr = [rows.ravel(), rows[1:].ravel(), rows[:-1].ravel()]
    cc = [cols.ravel(), (cols[1:] - n).ravel(), (cols[:-1] + n).ravel()]
    return sp.csc_matrix((np.concatenate(data), (np.concatenate(rr), np.concatenate(cc))),
                         shape=(K * n, K * n))


class QuarterPlaneStepper:
    """
    Semi-implicit finite volumes for U = Ũ − Ū on the quarter-plane.

    One step is U⁺ = U + Δt (I − Δt D)⁻¹ R(U), where R is the discrete
    perturbation operator N(Ū + U) − N(Ū) (nonlinear) or its directional
    derivative at Ū (linearized), and D is its viscous part frozen at Ū.
    D does not depend on y, so the implicit solve is one sparse LU per
    Fourier mode in y.

    Wall conditions at x₁ = 0:
        layer       homogeneous Dirichlet (inflow layers)
        reflecting  zero normal flux
    x₁ = L₁ extrapolates; y is periodic.
    """

    WALLS = ("layer", "reflecting")

    def __init__(self, system: SystemModel, profile: ProfileGrid, grid: QuarterPlane, *,
                 dt: float | None = None, cfl: float = CFL_NUMBER, sample_interval: float | None = None,
                 wall: str = "layer") -> None:
        if system.d != 2:
            raise RejectedInputError(
                f"{system.name}: quarter-plane stepping is two-dimensional (d = {system.d}); "
                "use the contour route"
            )
        if wall not in self.WALLS:
            raise RejectedInputError(f"unknown wall condition '{wall}'")
        if wall == "layer" and system.n_hyp > 0 and profile_direction(system, profile) == "outflow":
            raise RejectedInputError("quarter-plane stepping supports inflow layers only")
        self.system = system
        self.profile = profile
        self.grid = grid
        self.wall = wall
        self.cfl = cfl
        self._sign = -1.0 if wall == "layer" else 1.0

        n = system.n
        Ubar = np.array([profile.state(float(s)) for s in grid.x])
        wall_state = profile.U[0] if wall == "layer" else Ubar[0]
        self._bar_left = 2.0 * wall_state - Ubar[0] if wall == "layer" else Ubar[0].copy()
        self._bar_right = Ubar[-1].copy()
        self._ubar = Ubar
        ext = np.vstack((self._bar_left, Ubar, self._bar_right))
        for u in ext:
            system.check_domain(u)

        jac = np.array([jacobians(system, u) for u in ext])
        self.alpha = (float(np.max(np.abs(np.linalg.eigvals(jac[:, 0])))),
                      float(np.max(np.abs(np.linalg.eigvals(jac[:, 1])))))
        speed = self.alpha[0] / grid.hx + self.alpha[1] / grid.hy
        self.dt_cfl = cfl / speed if speed > 0 else cfl * min(grid.hx, grid.hy)
        if dt is not None and dt > self.dt_cfl * (1.0 + 1e-12):
            raise CFLViolation(f"Δt = {dt:.4g} exceeds the CFL limit {self.dt_cfl:.4g}",
                               dt=dt, limit=self.dt_cfl, cfl=cfl)
        step = self.dt_cfl if dt is None else float(dt)
        if sample_interval is not None:
            step = sample_interval / math.ceil(sample_interval / step - 1e-9)
        self.dt = step
        self.n = n
        self._bar_field = np.broadcast_to(Ubar[:, None, :], (grid.nx, grid.ny, n))
        self._base = self._operator(self._extend(np.zeros((grid.nx, grid.ny, n))))
        self._viscous = system.viscosity is not None
        self._modes = self._factor(ext)
        logger.debug("Quarter-plane stepper %dx%d: Δt %.4g (CFL limit %.4g), α = (%.3g, %.3g)",
                     grid.nx, grid.ny, self.dt, self.dt_cfl, *self.alpha)

    # construction

    def refined(self, factor: int = 2) -> "QuarterPlaneStepper":
        """The same scheme with Δt divided by ``factor``."""
        return QuarterPlaneStepper(self.system, self.profile, self.grid, dt=self.dt / factor,
                                   cfl=self.cfl, wall=self.wall)

    def _factor(self, ext: Array) -> list[Any]:
        grid, n, nx = self.grid, self.n, self.grid.nx
        B = self.system.viscosity_on(ext)                            # (nx+2, 2, 2, n, n)
        hx, hy = grid.hx, grid.hy
        Bf = 0.5 * (B[:-1, 0, 0] + B[1:, 0, 0])                      # faces 0..nx
        B12, B21, B22 = B[:, 0, 1], B[1:-1, 1, 0], B[1:-1, 1, 1]
        kappa = 2.0 * np.pi * np.fft.rfftfreq(grid.ny, d=hy)
        eye = sp.identity(nx * n, dtype=complex, format="csc")
        lus = []
        for kap in kappa:
            s1 = 1j * np.sin(kap * hy) / hy
            s2 = -4.0 * np.sin(0.5 * kap * hy) ** 2 / hy ** 2
            L = Bf[:-1] / hx ** 2 - s1 * (B12[:-2] + B21) / (2.0 * hx)
            R = Bf[1:] / hx ** 2 + s1 * (B12[2:] + B21) / (2.0 * hx)
            C = -(Bf[:-1] + Bf[1:]) / hx ** 2 + s2 * B22
            C = C.astype(complex)
            C[0] += self._sign * L[0]
            C[-1] += R[-1]
            D = _block_tridiagonal(L.astype(complex), C, R.astype(complex))
            lus.append(spla.splu((eye - self.dt * D).tocsc()))
        return lus

    # operators

    def _extend(self, U: Array) -> Array:
        """Ū + U with one ghost column on each side of x₁."""
        left = self._bar_left + self._sign * U[0]
        right = self._bar_right + U[-1]
        return np.concatenate((left[None], self._bar_field + U, right[None]), axis=0)

    def _operator(self, S: Array) -> Array:
        """Discrete −Σ∂_j F^j(S) + Σ∂_j(B^{jk}(S)∂_k S) on the interior cells."""
        system, grid = self.system, self.grid
        hx, hy = grid.hx, grid.hy
        ax, ay = self.alpha
        F = system.flux_on(S)                                        # (nx+2, ny, 2, n)
        Fx = 0.5 * (F[:-1, :, 0] + F[1:, :, 0]) - 0.5 * ax * (S[1:] - S[:-1])
        if self.wall == "reflecting":
            Fx[0] = 0.0
        Sc, Fc = S[1:-1], F[1:-1, :, 1]
        Fy = 0.5 * (Fc + np.roll(Fc, -1, axis=1)) - 0.5 * ay * (np.roll(Sc, -1, axis=1) - Sc)
        out = -(Fx[1:] - Fx[:-1]) / hx - (Fy - np.roll(Fy, 1, axis=1)) / hy
        if system.viscosity is None:
            return out
        B = system.viscosity_on(S)                                   # (nx+2, ny, 2, 2, n, n)
        mv = lambda M, v: np.einsum("...ab,...b->...a", M, v)  # noqa: E731
        qx = mv(0.5 * (B[:-1, :, 0, 0] + B[1:, :, 0, 0]), (S[1:] - S[:-1]) / hx)
        out += (qx[1:] - qx[:-1]) / hx
        B22 = B[1:-1, :, 1, 1]
        qy = mv(0.5 * (B22 + np.roll(B22, -1, axis=1)), (np.roll(Sc, -1, axis=1) - Sc) / hy)
        out += (qy - np.roll(qy, 1, axis=1)) / hy
        cross = mv(B[:, :, 0, 1], (np.roll(S, -1, axis=1) - np.roll(S, 1, axis=1)) / (2.0 * hy))
        out += (cross[2:] - cross[:-2]) / (2.0 * hx)
        cross = mv(B[1:-1, :, 1, 0], (S[2:] - S[:-2]) / (2.0 * hx))
        out += (np.roll(cross, -1, axis=1) - np.roll(cross, 1, axis=1)) / (2.0 * hy)
        return out

    def nonlinear_rhs(self, U: Array) -> Array:
        return self._operator(self._extend(U)) - self._base

    def linear_rhs(self, U: Array) -> Array:
        """Directional derivative of the perturbation operator at Ū along U."""
        scale = float(np.max(np.abs(U)))
        if scale == 0.0:
            return np.zeros_like(U)
        h = FD_STEP_SCALE * (1.0 + float(np.max(np.abs(self._ubar)))) / scale
        return (self.nonlinear_rhs(h * U) - self.nonlinear_rhs(-h * U)) / (2.0 * h)

    def quadratic_part(self, U: Array) -> Array:
        """N(Ū + U) − N(Ū) − J U: the discrete quadratic remainder."""
        return self.nonlinear_rhs(U) - self.linear_rhs(U)

    def _implicit(self, R: Array) -> Array:
        nx, ny, n = R.shape
        Rh = np.fft.rfft(R, axis=1)
        out = np.empty_like(Rh)
        for m, lu in enumerate(self._modes):
            out[:, m, :] = lu.solve(np.ascontiguousarray(Rh[:, m, :]).reshape(-1)).reshape(nx, n)
        return np.fft.irfft(out, n=ny, axis=1)

    def step(self, U: Array, nonlinear: bool = False) -> Array:
        R = self.nonlinear_rhs(U) if nonlinear else self.linear_rhs(U)
        return U + self.dt * (self._implicit(R) if self._viscous else R)

    def advance(self, U: Array, duration: float, *, nonlinear: bool = False) -> Array:
        steps = int(round(duration / self.dt))
        if abs(steps * self.dt - duration) > 1e-9 * max(1.0, duration):
            raise RejectedInputError(f"duration {duration:g} is not a multiple of Δt = {self.dt:g}")
        for _ in range(steps):
            U = self.step(U, nonlinear)
        return U


# ─── Time integration ─────────────────────────────────────────

def _stepper_for(system: SystemModel, profile: ProfileGrid, grid: QuarterPlane | DecaySection,
                 T: float, samples: int, dt: float | None, cfl: float, wall: str) -> QuarterPlaneStepper:
    if isinstance(grid, DecaySection):
        grid = QuarterPlane.from_section(grid)
    return QuarterPlaneStepper(system, profile, grid, dt=dt, cfl=cfl, sample_interval=T / samples, wall=wall)


def _integrate(stepper: QuarterPlaneStepper, U0: Array, T: float, samples: int, *, nonlinear: bool,
               keep_snapshots: bool, epsilon: float, regime: str) -> DecaySeries:
    grid = stepper.grid
    U0 = np.asarray(U0, dtype=float)
    if U0.shape != (grid.nx, grid.ny, stepper.n):
        raise RejectedInputError(f"U₀ must have shape {(grid.nx, grid.ny, stepper.n)}, got {U0.shape}")
    if T <= 0 or samples < 1:
        raise RejectedInputError("T and the sample count must be positive")
    times = np.linspace(0.0, T, samples + 1)
    interval = T / samples
    if abs(round(interval / stepper.dt) * stepper.dt - interval) > 1e-9 * max(1.0, interval):
        raise RejectedInputError("the stepper's Δt does not divide the sample interval")
    peak0 = float(np.max(np.abs(U0)))
    U = U0.copy()
    records = [grid.norms(U)]
    snaps = [U.copy()] if keep_snapshots else []
    meta: dict[str, Any] = {"nonlinear": nonlinear, "dt": stepper.dt, "grid": [grid.nx, grid.ny],
                            "wall": stepper.wall, "blowup": False}
    edge_right = edge_lateral = 0.0
    kept = 1
    for i in range(1, times.size):
        U = stepper.advance(U, interval, nonlinear=nonlinear)
        peak = float(np.max(np.abs(U))) if np.all(np.isfinite(U)) else float("inf")
        if peak0 > 0 and peak > BLOWUP_FACTOR * peak0:
            logger.warning("Perturbation grew past %gx its initial size at t = %.3g", BLOWUP_FACTOR, times[i])
            meta.update(blowup=True, blowup_time=float(times[i]))
            break
        records.append(grid.norms(U))
        if keep_snapshots:
            snaps.append(U.copy())
        kept += 1
        a = np.linalg.norm(U, axis=-1)
        edge_right = max(edge_right, float(np.max(a[-1])))
        edge_lateral = max(edge_lateral, float(np.max(a[:, [0, -1]])))

    t = times[:kept]
    norms = {tag: np.array([r[tag] for r in records]) for tag in records[0]}
    scale = peak0 if peak0 > 0 else 1.0
    meta.update(edge_right=edge_right / scale, edge_lateral=edge_lateral / scale)
    if peak0 > 0:
        if edge_lateral / scale > EDGE_THRESHOLD:
            logger.warning("Perturbation reached the lateral edges (%.2e of its initial size)", edge_lateral / scale)
        incoming = np.min(np.real(np.linalg.eigvals(jacobians(stepper.system, stepper.profile.endstate)[0])))
        if edge_right / scale > EDGE_THRESHOLD and incoming < 0:
            raise DomainReflectionError(
                "the perturbation reached x₁ = L₁ where characteristics enter the box; enlarge length_x",
                edge=edge_right / scale, length_x=grid.length_x,
            )
    zeta = bootstrap_functional(t, norms, 2, epsilon=epsilon, regime=regime)
    return DecaySeries(t, norms, zeta, meta, np.array(snaps) if keep_snapshots else None)


def time_integrate_linearized(system: SystemModel, profile: ProfileGrid, U0: Array, T: float,
                              grid: QuarterPlane | DecaySection, *, samples: int = 40, dt: float | None = None,
                              cfl: float = CFL_NUMBER, wall: str = "layer", keep_snapshots: bool = False,
                              stepper: QuarterPlaneStepper | None = None,
                              epsilon: float = EPSILON_REPORT) -> DecaySeries:
    """Evolve U_t = LU from U₀ with zero boundary perturbations and record its norms."""
    stepper = stepper or _stepper_for(system, profile, grid, T, samples, dt, cfl, wall)
    return _integrate(stepper, U0, T, samples, nonlinear=False, keep_snapshots=keep_snapshots,
                      epsilon=epsilon, regime="two-dimensional")


def time_integrate_nonlinear(system: SystemModel, profile: ProfileGrid, U0: Array, T: float,
                             grid: QuarterPlane | DecaySection, *, samples: int = 40, dt: float | None = None,
                             cfl: float = CFL_NUMBER, wall: str = "layer", keep_snapshots: bool = False,
                             stepper: QuarterPlaneStepper | None = None,
                             epsilon: float = EPSILON_REPORT) -> DecaySeries:
    """Evolve Ũ = Ū + U under the full system and record the norms of Ũ − Ū and ζ(t)."""
    stepper = stepper or _stepper_for(system, profile, grid, T, samples, dt, cfl, wall)
    return _integrate(stepper, U0, T, samples, nonlinear=True, keep_snapshots=keep_snapshots,
                      epsilon=epsilon, regime="two-dimensional")


def superposition_check(stepper: QuarterPlaneStepper, U0: Array, V0: Array, duration: float,
                        tol: float = 1e-8) -> CheckResult:
    """The linearized evolution of U₀ + 2V₀ against the sum of the separate evolutions."""
    a = stepper.advance(U0, duration)
    b = stepper.advance(V0, duration)
    c = stepper.advance(U0 + 2.0 * V0, duration)
    denom = float(np.linalg.norm(c)) or 1.0
    err = float(np.linalg.norm(c - a - 2.0 * b)) / denom
    verdict = Verdict.PASS if err <= tol else Verdict.FAIL
    return CheckResult("linearity", verdict, {"relative_error": err, "tol": tol, "duration": duration})


def quadratic_smallness(stepper: QuarterPlaneStepper, U0: Array, t: float = 5.0,
                        band: tuple[float, float] = (3.5, 4.5)) -> CheckResult:
    """Halving U₀ must shrink the nonlinear-minus-linearized gap at time t by about 4."""
    lin = stepper.advance(U0, t)
    gaps = []
    for a in (1.0, 0.5):
        nl = stepper.advance(a * U0, t, nonlinear=True)
        gaps.append(float(np.linalg.norm(nl - a * lin)))
    factor = gaps[0] / gaps[1] if gaps[1] > 0 else float("nan")
    measured = {"t": t, "gap_full": gaps[0], "gap_half": gaps[1], "factor": factor, "band": list(band)}
    if not np.isfinite(factor):
        return CheckResult("quadratic-smallness", Verdict.INDETERMINATE, measured, note="zero gap")
    ok = band[0] <= factor <= band[1]
    return CheckResult("quadratic-smallness", Verdict.PASS if ok else Verdict.FAIL, measured,
                       None if ok else {"factor": factor})


# ─── Duhamel consistency ──────────────────────────────────────

def _sample_index(t: Array, when: float) -> int:
    i = int(np.argmin(np.abs(t - when)))
    if abs(t[i] - when) > 1e-9 * max(1.0, when):
        raise RejectedInputError(f"t = {when:g} is not a sample time of the series")
    return i


def duhamel_residuals(stepper: QuarterPlaneStepper, series: DecaySeries, times: Sequence[float]) -> dict[float, float]:
    """
    |U(t) − S(t)U₀ − ∫₀^t S(t−s) q(s) ds|₂ / |U(t)|₂ at the requested sample times.

    S is the linearized stepper at half the time step; the s-integral is the
    trapezoid rule on the sample times, marched as
    I_{m+1} = S(Δ)[I_m + Δ/2 q_m] + Δ/2 q_{m+1}.
    """
    if series.snapshots is None:
        raise RejectedInputError("Duhamel residuals need a series with snapshots")
    nonlinear = bool(series.meta.get("nonlinear"))
    fine = stepper.refined(2)
    t, snaps = series.t, series.snapshots
    wanted = {_sample_index(t, w) for w in times if w <= t[-1] + 1e-12}
    q = [stepper.quadratic_part(u) for u in snaps] if nonlinear else None
    S = snaps[0].copy()
    I = np.zeros_like(S)
    out: dict[float, float] = {}
    for m in range(t.size - 1):
        delta = float(t[m + 1] - t[m])
        S = fine.advance(S, delta)
        if q is not None:
            I = fine.advance(I + 0.5 * delta * q[m], delta) + 0.5 * delta * q[m + 1]
        if m + 1 in wanted:
            U = snaps[m + 1]
            denom = float(np.linalg.norm(U)) or 1.0
            out[float(t[m + 1])] = float(np.linalg.norm(U - S - I)) / denom
    return out


def duhamel_check(stepper: QuarterPlaneStepper, linear: DecaySeries, nonlinear: DecaySeries | None,
                  times: Sequence[float], *, linear_tol: float = 0.02, nonlinear_tol: float = 0.05,
                  at: float = 10.0) -> CheckResult:
    """Duhamel residuals of both runs; the tolerances apply at t = ``at`` (or the last sampled time)."""
    measured: dict[str, Any] = {"linear": duhamel_residuals(stepper, linear, times)}
    if nonlinear is not None:
        measured["nonlinear"] = duhamel_residuals(stepper, nonlinear, times)
    verdicts, witness = [], {}
    for kind, tol in (("linear", linear_tol), ("nonlinear", nonlinear_tol)):
        res = measured.get(kind)
        if not res:
            continue
        key = min(res, key=lambda s: abs(s - at))
        measured[f"{kind}_at"] = {"t": key, "residual": res[key], "tol": tol}
        ok = res[key] <= tol
        verdicts.append(Verdict.PASS if ok else Verdict.FAIL)
        if not ok:
            witness[kind] = {"t": key, "residual": res[key]}
    verdict = Verdict.combine(verdicts) if verdicts else Verdict.NOT_APPLICABLE
    return CheckResult("duhamel", verdict, measured, witness or None)


def duhamel_amplitude_sweep(stepper: QuarterPlaneStepper, U0: Array, amplitudes: Sequence[float],
                            T: float, samples: int, *, at: float = 10.0,
                            linear_residual: float | None = None) -> CheckResult:
    """Nonlinear Duhamel residuals at decreasing amplitudes approach the linear-run residual monotonically."""
    amplitudes = sorted(amplitudes, reverse=True)
    residuals = []
    for a in amplitudes:
        series = _integrate(stepper, a * U0, T, samples, nonlinear=True, keep_snapshots=True,
                            epsilon=EPSILON_REPORT, regime="two-dimensional")
        res = duhamel_residuals(stepper, series, [at])
        residuals.append(next(iter(res.values())) if res else float("nan"))
    if linear_residual is None:
        lin = _integrate(stepper, U0, T, samples, nonlinear=False, keep_snapshots=True,
                         epsilon=EPSILON_REPORT, regime="two-dimensional")
        linear_residual = next(iter(duhamel_residuals(stepper, lin, [at]).values()))
    gaps = [abs(r - linear_residual) for r in residuals]
    monotone = bool(np.all(np.diff(gaps) <= 1e-12 + 1e-9 * max(gaps, default=0.0)))
    measured = {"amplitudes": amplitudes, "residuals": residuals, "linear_residual": linear_residual, "gaps": gaps}
    return CheckResult("duhamel-amplitude", Verdict.PASS if monotone else Verdict.FAIL, measured,
                       None if monotone else {"gaps": gaps})


# ─── Low-frequency solution operator ──────────────────────────

@dataclass(frozen=True)
class S1Rule:
    """Contour nodes k and tangential nodes (radius along the first axis for d = 3)."""

    d: int
    k: Array
    k_weights: Array
    xi: Array
    xi_weights: Array          # include (2π)^{−(d−1)} and, for d = 3, the radial factor 2πs

    @property
    def size(self) -> int:
        return self.k.size * self.xi.size

    def xi_vector(self, s: float) -> Array:
        v = np.zeros(self.d - 1)
        if self.d > 1:
            v[0] = s
        return v


def s1_rule(d: int, spec: QuadratureSpec) -> S1Rule:
    if spec.rule != "graded-gauss":
        raise RejectedInputError(f"unknown quadrature rule '{spec.rule}'")
    k, wk = symmetric_graded_rule(spec.k_max, spec.k_panels, spec.order)
    if d == 1:
        xi, wx = np.zeros(1), np.ones(1)
    elif d == 2:
        xi, wx = symmetric_graded_rule(spec.r, spec.xi_panels, spec.order)
        wx = wx / (2.0 * np.pi)
    elif d == 3:
        # data symmetric in x̃: the ξ̃ integral is radial
        xi, wx = gauss_panels(graded_breaks(spec.r, spec.xi_panels), spec.order)
        wx = wx * 2.0 * np.pi * xi / (2.0 * np.pi) ** 2
    else:
        raise RejectedInputError(f"the contour route covers d ≤ 3, got d = {d}")
    return S1Rule(d, k, wk, xi, wx)


@dataclass(frozen=True)
class S1Field:
    """v(t, ξ̃, x₁) = normal profile of S₁(t)f at each tangential node, with the lateral transform ĝ."""

    rule: S1Rule
    t: Array
    x: Array
    lateral: Array             # ĝ at the tangential nodes
    v: Array                   # (len(t), len(xi), len(x), n)
    x_tilde: Array
    theta1: float

    @property
    def d(self) -> int:
        return self.rule.d

    def _coefficients(self) -> Array:
        return self.rule.xi_weights * self.lateral

    def at(self, i: int, y: Array | None = None) -> Array:
        """u(x₁, x̃) at time index i; x̃ = (y, 0, …). Shape (len(x), len(y), n)."""
        c = self._coefficients()
        if self.d == 1:
            return self.v[i, 0][:, None, :]
        y = np.zeros(1) if y is None else np.asarray(y, dtype=float)
        if self.d == 3 and np.any(y != 0.0):
            raise RejectedInputError("the radial reduction evaluates S₁ at x̃ = 0 only")
        phase = np.exp(1j * np.outer(self.rule.xi, y)) if self.d == 2 else np.ones((c.size, 1))
        return np.einsum("k,ky,kxn->xyn", c, phase, self.v[i])

    def norms(self, i: int) -> dict[str, float]:
        """L², L^∞_{x₁}(L²_{x̃}) by Parseval, and the sup over the x̃ samples."""
        W = self.rule.xi_weights * np.abs(self.lateral) ** 2
        dens = np.sum(np.abs(self.v[i]) ** 2, axis=-1)               # (xi, x)
        lateral_l2 = np.sqrt(np.maximum(W @ dens, 0.0))              # (x,)
        l2 = float(np.sqrt(trapezoid(lateral_l2 ** 2, self.x)))
        samples = self.x_tilde if self.d == 2 else None
        linf = float(np.max(np.linalg.norm(self.at(i, samples), axis=-1)))
        return {"L2": l2, "L2Linf": float(np.max(lateral_l2)), "Linf": linf}

    def series(self) -> DecaySeries:
        records = [self.norms(i) for i in range(self.t.size)]
        norms = {tag: np.array([r[tag] for r in records]) for tag in records[0]}
        return DecaySeries(self.t.copy(), norms, meta={"route": "contour", "nodes": self.rule.size,
                                                       "theta1": self.theta1})


def _tail_offsets(system: SystemModel, endstate: Array, t_max: float, h: float = 0.5) -> Array:
    speed = float(np.max(np.abs(np.linalg.eigvals(jacobians(system, endstate)[0]))))
    length = (speed + 1.0) * t_max + 10.0 * np.sqrt(max(t_max, 1.0)) + 10.0
    return h * np.arange(1, int(math.ceil(length / h)) + 1)


def s1_apply(system: SystemModel, profile: ProfileGrid, f: Forcing, times: Sequence[float],
             spec: QuadratureSpec | None = None, *, theta1: float = THETA1, lateral_width: float = 4.0,
             endstate: Endstate | None = None, nodes: int = 400, workers: int | None = None) -> S1Field:
    """
    S₁(t) applied to f(x₁)·g(x̃) with g a unit-mass Gaussian of width ``lateral_width``.

    v(t) = −(1/2πi) Σ_k w_k e^{λ_k t} (i − 2θ₁k) (L_ξ̃ − λ_k)⁻¹ f at every tangential node;
    past the grid the resolvent is continued by its exact decaying tail.
    """
    spec = spec or QuadratureSpec()
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(times <= 0):
        raise RejectedInputError("S₁ is evaluated at positive times")
    rule = s1_rule(system.d, spec)
    endstate = endstate or Endstate.at(system, profile.endstate)
    coefficients = LayerCoefficients(system, profile)
    direction = profile_direction(system, profile)
    grid = resolvent_grid(profile, nodes=nodes)
    offsets = _tail_offsets(system, profile.endstate, float(times.max()))
    x = np.concatenate((grid, grid[-1] + offsets))
    lateral = np.exp(-(lateral_width * rule.xi) ** 2 / 4.0) if system.d > 1 else np.ones(1)
    v = np.zeros((times.size, rule.xi.size, x.size, system.n), dtype=complex)
    logger.info("S₁ quadrature: %d contour × %d tangential nodes, %d times", rule.k.size, rule.xi.size, times.size)

    for j, s in enumerate(rule.xi):
        xi = rule.xi_vector(float(s))

        def node(i: int) -> Array:
            fp = contour_point(xi, float(rule.k[i]), theta1)
            field_ = solve_resolvent(system, profile, fp, f, grid=grid, coefficients=coefficients,
                                     direction=direction, endstate=endstate, modes=False)
            return np.vstack((field_.U, field_.extend(offsets)))

        solved = parallel_map(node, range(rule.k.size), workers)
        for i, U in enumerate(solved):
            k = float(rule.k[i])
            lam = contour_point(xi, k, theta1).lam
            c = -rule.k_weights[i] * np.exp(lam * times) * (1j - 2.0 * theta1 * k) / (2j * np.pi)
            v[:, j] += c[:, None, None] * U[None]
    x_tilde = np.linspace(-spec.x_tilde_max, spec.x_tilde_max, spec.x_tilde_points)
    return S1Field(rule, times, x, lateral, v, x_tilde, theta1)


def _doubled(spec: QuadratureSpec) -> QuadratureSpec:
    return replace(spec, order=2 * spec.order)


def s1_converged(system: SystemModel, profile: ProfileGrid, f: Forcing, t: float,
                 spec: QuadratureSpec | None = None, *, tol: float = 0.01, refinements: int = 1,
                 **kwargs: Any) -> tuple[S1Field, float]:
    """
    Refine the node spacing until two successive S₁(t)f agree to ``tol``.

    Raises QuadratureNonConvergence when ``refinements`` halvings do not reach it.
    """
    spec = spec or QuadratureSpec()
    coarse = s1_apply(system, profile, f, [t], spec, **kwargs)
    change = float("inf")
    for _ in range(refinements):
        spec = _doubled(spec)
        fine = s1_apply(system, profile, f, [t], spec, **kwargs)
        ref = fine.at(0, fine.x_tilde if fine.d == 2 else None)
        change = float(np.linalg.norm(ref - coarse.at(0, coarse.x_tilde if coarse.d == 2 else None)))
        change /= float(np.linalg.norm(ref)) or 1.0
        logger.debug("S₁ refinement to order %d: relative change %.3e", spec.order, change)
        if change <= tol:
            return fine, change
        coarse = fine
    logger.warning("S₁ quadrature did not settle: relative change %.3e after %d refinements", change, refinements)
    raise QuadratureNonConvergence(f"S₁ quadrature changed by {change:.3e} under refinement",
                                   change=change, order=spec.order, t=t)


def s1_refinement_check(system: SystemModel, profile: ProfileGrid, f: Forcing, t: float = 10.0,
                        spec: QuadratureSpec | None = None, *, tol: float = 0.01, **kwargs: Any) -> CheckResult:
    try:
        _, change = s1_converged(system, profile, f, t, spec, tol=tol, **kwargs)
    except QuadratureNonConvergence as e:
        return CheckResult("s1-refinement", Verdict.INDETERMINATE, e.diagnostics, note=str(e))
    return CheckResult("s1-refinement", Verdict.PASS, {"t": t, "change": change, "tol": tol})


# ─── Kernel identity ──────────────────────────────────────────

def singular_rule(upper: float, panels: int, order: int, exponent: float,
                  ratio: float = 0.1) -> tuple[Array, Array]:
    """Nodes and weights for ∫₀^upper k^exponent h(k) dk, exponent > −1, h smooth."""
    if exponent <= -1.0:
        raise RejectedInputError("the weight k^exponent must be integrable at 0")
    breaks = graded_breaks(upper, panels, ratio)
    s, w = roots_jacobi(order, 0.0, exponent)
    b = breaks[1]
    k0 = 0.5 * b * (1.0 + s)
    w0 = w * (0.5 * b) ** (1.0 + exponent)
    k1, w1 = gauss_panels(breaks[1:], order)
    return np.concatenate((k0, k1)), np.concatenate((w0, w1 * k1 ** exponent))


def kernel_integral(t: float, epsilon: float, theta1: float = THETA1, *, panels: int = 8,
                    order: int = GAUSS_ORDER) -> tuple[float, float]:
    """(quadrature, closed form) of ∫_R e^{−θ₁k²t}|k|^{ε−1} dk = (θ₁t)^{−ε/2} Γ(ε/2)."""
    a = theta1 * t
    k, w = singular_rule(np.sqrt(60.0 / a), panels, order, epsilon - 1.0)
    quad = 2.0 * float(w @ np.exp(-a * k * k))
    return quad, float(a ** (-0.5 * epsilon) * gamma_fn(0.5 * epsilon))


def verify_kernel_identity(times: Sequence[float], epsilon: float = EPSILON_REPORT, theta1: float = THETA1, *,
                           tol: float = 0.01, **kwargs: Any) -> CheckResult:
    errors = {}
    for t in times:
        quad, exact = kernel_integral(float(t), epsilon, theta1, **kwargs)
        errors[float(t)] = abs(quad - exact) / abs(exact)
    worst = max(errors.values())
    ok = worst <= tol
    return CheckResult("kernel-identity", Verdict.PASS if ok else Verdict.FAIL,
                       {"relative_error": errors, "epsilon": epsilon, "theta1": theta1, "tol": tol},
                       None if ok else {"t": max(errors, key=errors.get), "error": worst})


# ─── Remainder ────────────────────────────────────────────────

def s1_on_grid(field_: S1Field, i: int, grid: QuarterPlane) -> Array:
    """S₁(t_i)f interpolated onto the cell centres of the quarter-plane, real part."""
    u = np.real(field_.at(i, grid.y))                               # (len(x), ny, n)
    out = np.empty((grid.nx, grid.ny, u.shape[-1]))
    for j in range(grid.ny):
        for a in range(u.shape[-1]):
            out[:, j, a] = np.interp(grid.x, field_.x, u[:, j, a])
    return out


def remainder_check(linear: DecaySeries, field_: S1Field, grid: QuarterPlane, *,
                    window_ratio: float = FIT_WINDOW_RATIO_MIN) -> CheckResult:
    """|U_lin(t) − S₁(t)U₀|₂ decays exponentially and faster than |U_lin(t)|₂."""
    if linear.snapshots is None:
        raise RejectedInputError("the remainder check needs linear snapshots")
    lo = linear.t_final / window_ratio
    rows = []
    for i, t in enumerate(field_.t):
        hits = np.flatnonzero(np.isclose(linear.t, t))
        if t < lo or not hits.size:
            continue
        U = linear.snapshots[hits[0]]
        rem = float(np.sqrt(np.sum((U - s1_on_grid(field_, i, grid)) ** 2) * grid.hx * grid.hy))
        rows.append((float(t), rem, float(linear.norm("L2")[hits[0]])))
    if len(rows) < 3:
        return CheckResult("high-frequency-remainder", Verdict.INDETERMINATE, note="too few common times")
    t, rem, full = map(np.array, zip(*rows))
    rate, C = fit_exponential_rate(t, rem)
    share = rem / np.where(full > 0, full, np.inf)
    measured = {"rate": rate, "C": C, "share_start": float(share[0]), "share_end": float(share[-1]),
                "window": [float(t[0]), float(t[-1])]}
    ok = np.isfinite(rate) and rate > 0 and share[-1] <= share[0]
    return CheckResult("high-frequency-remainder", Verdict.PASS if ok else Verdict.FAIL, measured,
                       None if ok else {"rate": rate, "share": [float(share[0]), float(share[-1])]})


# ─── Module run ───────────────────────────────────────────────

@dataclass(frozen=True)
class DecayReport:
    checks: dict[str, CheckResult]
    series: dict[str, DecaySeries]
    fits: list[DecayFit]

    @property
    def verdict(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks.values())

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for name, s in self.series.items():
            out.extend({"series": name, **row} for row in s.rows())
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "series": {name: s.to_dict() for name, s in self.series.items()},
            "fits": [f.to_dict() for f in self.fits],
        }


def _fit_all(series: DecaySeries, name: str, targets: dict[str, float], tags: Sequence[str],
             window: tuple[float, float] | None, slack: float, ratio_min: float) -> list[DecayFit]:
    fits = []
    for tag in tags:
        if tag not in series.norms:
            continue
        try:
            fits.append(fit_decay(series, tag, window, target=_target_for(targets, tag), slack=slack,
                                  ratio_min=ratio_min, name=name))
        except RejectedInputError as e:
            logger.warning("No %s fit for %s: %s", tag, name, e)
    return fits


def run_decay(system: SystemModel, endstate: Endstate, profile: ProfileGrid, config: RunConfig, *,
              workers: int | None = None) -> DecayReport:
    """Quarter-plane runs (d = 2) and the contour route; every check lands in the report."""
    section, tol, quad = config.decay, config.tolerances, config.quadrature
    theta1 = config.contour.theta1
    d = system.d
    checks: list[CheckResult] = []
    series: dict[str, DecaySeries] = {}
    fits: list[DecayFit] = []
    s1_times = sorted(set(section.s1_times))

    checks.append(verify_kernel_identity(s1_times, section.epsilon, theta1))

    f1: Forcing | None = None
    linear = None
    grid = None
    if d == 2 and section.dimension == 2:
        grid = QuarterPlane.from_section(section)
        interval = section.t_final / section.samples
        stepper = QuarterPlaneStepper(system, profile, grid, cfl=section.cfl, sample_interval=interval)
        U0, f1 = initial_perturbation(system, grid, amplitude=section.amplitude)
        targets = decay_targets(2, 2.0, "two-dimensional")
        linear = time_integrate_linearized(system, profile, U0, section.t_final, grid, samples=section.samples,
                                           stepper=stepper, keep_snapshots=True, epsilon=section.epsilon)
        series["linearized"] = linear
        fits += _fit_all(linear, "linearized", targets, ("L2", "Linf", "L2Linf", "H1"), None,
                         tol.slope_slack, tol.fit_ratio_min)
        shifted = np.roll(U0, grid.ny // 4, axis=1)
        checks.append(superposition_check(stepper, U0, shifted, 4 * interval))
        if section.nonlinear:
            nonlinear = time_integrate_nonlinear(system, profile, U0, section.t_final, grid,
                                                 samples=section.samples, stepper=stepper,
                                                 keep_snapshots=True, epsilon=section.epsilon)
            series["nonlinear"] = nonlinear
            fits += _fit_all(nonlinear, "nonlinear", targets, ("L2", "Linf", "L2Linf"), None,
                             tol.slope_slack, tol.fit_ratio_min)
            checks.append(zeta_window_check(nonlinear))
            duhamel = duhamel_check(stepper, linear, nonlinear, section.duhamel_times)
            checks.append(duhamel)
            at = min(10.0, linear.t_final)
            t_sweep = max(t for t in linear.t if t <= at + 1e-12)
            samples_sweep = int(round(t_sweep / interval))
            if samples_sweep >= 1:
                lin_at = duhamel.measured.get("linear_at", {})
                lin_res = lin_at.get("residual") if abs(lin_at.get("t", -1.0) - t_sweep) < 1e-9 else None
                checks.append(duhamel_amplitude_sweep(stepper, U0, [1.0, 0.5, 0.25], t_sweep, samples_sweep,
                                                      at=t_sweep, linear_residual=lin_res))
            t_gap = interval * max(1, round(min(5.0, t_sweep) / interval))
            checks.append(quadratic_smallness(stepper, U0, t_gap))
    else:
        grid_x = resolvent_grid(profile, nodes=400)
        f1 = make_forcing("bump", system.n, section.amplitude * np.ones(system.n) / np.sqrt(system.n),
                          center=min(6.0, 0.5 * grid_x[-1]), width=3.0)

    try:
        extra = [] if linear is None else [float(t) for t in linear.t if t > 0]
        times = sorted(set(s1_times) | set(extra))
        field_ = s1_apply(system, profile, f1, times, quad, theta1=theta1, endstate=endstate, workers=workers)
        s1 = field_.series()
        keep = np.isin(s1.t, s1_times)
        s1 = DecaySeries(s1.t[keep], {k: v[keep] for k, v in s1.norms.items()}, meta=s1.meta)
        series["s1"] = s1
        low = decay_targets(d, 2.0, "low-frequency")
        window = (s1_times[0], s1_times[-1])
        fits += _fit_all(s1, "s1", low, ("L2", "L2Linf", "Linf"), window, tol.slope_slack, tol.fit_ratio_min)
        if linear is not None and grid is not None:
            checks.append(remainder_check(linear, field_, grid, window_ratio=tol.fit_ratio_min))
        checks.append(s1_refinement_check(system, profile, f1, 10.0, quad, theta1=theta1, endstate=endstate,
                                          workers=workers))
    except NumericalFailure as e:
        logger.warning("Contour route failed: %s", e)
        checks.append(CheckResult("s1-decay", Verdict.INDETERMINATE, e.diagnostics, note=str(e)))

    for fit in fits:
        check = fit.check()
        if fit.norm == "H1":
            # the H^s line is a qualitative trend only
            check = replace(check, verdict=Verdict.PASS if fit.exponent < 0 else Verdict.INDETERMINATE,
                            name=f"hs-trend:{fit.series}")
        checks.append(check)

    report = DecayReport({c.name: c for c in checks}, series, fits)
    logger.info("Decay verdict: %s (%d checks)", report.verdict.value, len(checks))
    return report


__all__ = [
    "REGIMES",
    "NORM_TAGS",
    "decay_targets",
    "DecaySeries",
    "bootstrap_functional",
    "zeta_window_check",
    "DecayFit",
    "fit_decay",
    "QuarterPlane",
    "initial_perturbation",
    "QuarterPlaneStepper",
    "time_integrate_linearized",
    "time_integrate_nonlinear",
    "superposition_check",
    "quadratic_smallness",
    "duhamel_residuals",
    "duhamel_check",
    "duhamel_amplitude_sweep",
    "S1Rule",
    "s1_rule",
    "S1Field",
    "s1_apply",
    "s1_converged",
    "s1_refinement_check",
    "singular_rule",
    "kernel_integral",
    "verify_kernel_identity",
    "s1_on_grid",
    "remainder_check",
    "DecayReport",
    "run_decay",
]

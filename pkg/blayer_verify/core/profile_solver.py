"""
profile_solver — Standing boundary layers Ū(x₁) on a stretched half-line grid.

The steady equation integrates once to

    B¹¹(Ū) Ū' = F¹(Ū) − F¹(U₊).

Its top n − r rows are algebraic (the first integral F¹_I(Ū) = F¹_I(U₊));
they fix w̃^I as a function of w̃^II by Newton's method.  What remains is an
r-dimensional ODE for w̃^II,

    B¹¹_II(U) M(w) w' = F¹_II(U) − F¹_II(U₊),    M = dU/dw̃^II along the first integral,

solved as a two-point BVP by collocation (``scipy.integrate.solve_bvp``)
with continuation in the boundary-data amplitude.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from scipy.integrate import solve_bvp
from scipy.interpolate import make_interp_spline

from blayer_verify.configs.constants import (
    FIRST_INTEGRAL_TOL,
    NEWTON_MAX_ITER,
    PROFILE_DEFAULT_LENGTHS,
    PROFILE_HOMOTOPY_STEPS,
    PROFILE_MAX_NODES,
    PROFILE_NODES,
    PROFILE_STRETCH,
    PROFILE_TOL,
)
from blayer_verify.core.model_core import Endstate, SystemModel, fd_jacobian
from blayer_verify.core.verdicts import CheckResult, Verdict
from blayer_verify.errors import NoProfileFoundError, RejectedInputError, SingularProfileError
from blayer_verify.utils.fitting import fit_exponential_rate
from blayer_verify.utils.linalg import ordered_schur, real_subspace
from blayer_verify.utils.quadrature import stretched_grid

logger = logging.getLogger(__name__)


# ─── Profile grid ─────────────────────────────────────────────

@dataclass(frozen=True)
class ProfileGrid:
    """Discretized layer with its tail certificate |Ū − U₊| ≤ C e^{−θx₁}."""

    system: str
    x: np.ndarray                 # (M+1,)
    U: np.ndarray                 # (M+1, n)
    Up: np.ndarray                # (M+1, n)
    endstate: np.ndarray          # (n,)
    theta: float
    C: float
    residual: float
    boundary_data: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def length(self) -> float:
        return float(self.x[-1])

    @property
    def amplitude(self) -> float:
        """‖Ū − U₊‖_{L^∞}."""
        return float(np.max(np.linalg.norm(self.U - self.endstate, axis=1)))

    @property
    def is_constant(self) -> bool:
        return self.amplitude == 0.0

    @cached_property
    def _splines(self):
        k = min(5, len(self.x) - 1)
        return make_interp_spline(self.x, self.U, k=k), make_interp_spline(self.x, self.Up, k=k)

    def state(self, x: float) -> np.ndarray:
        """Ū(x), extended by U₊ beyond L and by Ū(0) below 0."""
        if x >= self.x[-1]:
            return self.endstate.copy()
        if x <= 0.0:
            return self.U[0].copy()
        return np.asarray(self._splines[0](x))

    def slope(self, x: float) -> np.ndarray:
        """Ū'(x), zero outside [0, L]."""
        if x >= self.x[-1] or x < 0.0:
            return np.zeros_like(self.endstate)
        return np.asarray(self._splines[1](x))

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "nodes": int(self.x.size),
            "length": self.length,
            "amplitude": self.amplitude,
            "theta": self.theta,
            "C": self.C,
            "residual": self.residual,
            **self.meta,
        }


def constant_profile(system: SystemModel, endstate: Endstate, length: float = 20.0,
                     nodes: int = PROFILE_NODES, stretch: float = PROFILE_STRETCH) -> ProfileGrid:
    """The trivial layer Ū ≡ U₊."""
    x = stretched_grid(length, nodes, stretch)
    U = np.tile(endstate.U, (x.size, 1))
    theta = _endstate_rate(system, endstate) or 1.0
    return ProfileGrid(system.name, x, U, np.zeros_like(U), endstate.U.copy(), theta, 0.0, 0.0,
                       boundary_data=system.to_w(endstate.U), meta={"constant": True})


# ─── Reduced ODE ──────────────────────────────────────────────

class ReducedProfileODE:
    """w̃^II ↦ (U, w̃^II') with the hyperbolic part eliminated by the first integral."""

    def __init__(self, system: SystemModel, endstate: Endstate) -> None:
        self.system = system
        self.m = system.n_hyp
        self.U_plus = endstate.U
        self.W_plus = system.to_w(endstate.U)
        self.F_plus = system.flux(endstate.U)[0]
        self._wI_guess = self.W_plus[: self.m].copy()

    def state(self, w2: np.ndarray, guess: np.ndarray | None = None) -> np.ndarray:
        """U(w̃^I(w̃^II), w̃^II) with F¹_I(U) = F¹_I(U₊) solved by Newton."""
        m = self.m
        if m == 0:
            return self.system.from_w(w2)
        wI = (self._wI_guess if guess is None else guess).copy()
        target = self.F_plus[:m]

        def g(v):
            return self.system.flux(self.system.from_w(np.concatenate((v, w2))))[0][:m] - target

        for _ in range(NEWTON_MAX_ITER):
            r = g(wI)
            if np.max(np.abs(r)) <= FIRST_INTEGRAL_TOL * (1.0 + np.max(np.abs(target))):
                return self.system.from_w(np.concatenate((wI, w2)))
            J = fd_jacobian(g, wI)
            try:
                step = np.linalg.solve(J, r)
            except np.linalg.LinAlgError as e:
                raise SingularProfileError(
                    "first integral is not locally solvable for w̃^I", w2=w2.tolist()
                ) from e
            if np.linalg.cond(J) > 1e12:
                raise SingularProfileError("first integral Jacobian is singular", w2=w2.tolist())
            wI = wI - step
        raise SingularProfileError("Newton iteration on the first integral did not converge",
                                   w2=w2.tolist(), residual=float(np.max(np.abs(g(wI)))))

    def rhs(self, w2: np.ndarray) -> np.ndarray:
        m = self.m
        U = self.state(w2)
        self.system.check_domain(U)
        B = self.system.viscosity_at(U)[0, 0][m:, :]
        M = fd_jacobian(self.state, w2)
        lhs = B @ M
        f = self.system.flux(U)[0][m:] - self.F_plus[m:]
        try:
            return np.linalg.solve(lhs, f)
        except np.linalg.LinAlgError as e:
            raise SingularProfileError("B¹¹_II M is singular along the profile", w2=w2.tolist()) from e

    def linearization(self) -> np.ndarray:
        return fd_jacobian(self.rhs, self.W_plus[self.m:])


def _endstate_rate(system: SystemModel, endstate: Endstate) -> float | None:
    if system.r == 0 or system.hyperbolic_only:
        return None
    try:
        J = ReducedProfileODE(system, endstate).linearization()
    except SingularProfileError:
        return None
    re = np.real(np.linalg.eigvals(J))
    stable = re[re < 0]
    return float(np.min(-stable)) if stable.size else None


# ─── Solver ───────────────────────────────────────────────────

def _split_boundary_data(system: SystemModel, h: np.ndarray) -> np.ndarray:
    if h.size == system.n:
        return h[system.n_hyp:]
    if h.size == system.r:
        return h
    raise RejectedInputError(
        f"boundary data must have n={system.n} (full W̃ trace) or r={system.r} (w̃^II) entries, got {h.size}"
    )


def _solve_once(ode: ReducedProfileODE, x: np.ndarray, guess: np.ndarray, h2: np.ndarray,
                Qs: np.ndarray, Qu: np.ndarray, tol: float):
    w_plus = ode.W_plus[ode.m:]

    def fun(_x, y):
        return np.column_stack([ode.rhs(y[:, i]) for i in range(y.shape[1])])

    def bc(ya, yb):
        return np.concatenate((Qs.conj().T @ (ya - h2), Qu.conj().T @ (yb - w_plus))).real

    return solve_bvp(fun, bc, x, guess, tol=tol, bc_tol=tol, max_nodes=PROFILE_MAX_NODES)


def solve_profile(
    system: SystemModel,
    endstate: Endstate,
    boundary_data: np.ndarray | None = None,
    length: float | None = None,
    tol: float = PROFILE_TOL,
    *,
    nodes: int = PROFILE_NODES,
    stretch: float = PROFILE_STRETCH,
    homotopy_steps: int = PROFILE_HOMOTOPY_STEPS,
) -> ProfileGrid:
    """
    Boundary layer connecting the W̃-trace ``boundary_data`` at x₁ = 0 to U₊.

    Raises
    ------
    SingularProfileError
        The first-integral elimination is not locally solvable.
    NoProfileFoundError
        Collocation or continuation did not converge, or the computed trace
        misses the requested data (no layer with that trace exists).
    """
    if system.hyperbolic_only or system.r == 0:
        raise RejectedInputError(f"{system.name} has no parabolic block; no viscous profile")
    W_plus = system.to_w(endstate.U)
    if boundary_data is None:
        h = W_plus.copy()
    else:
        h = np.asarray(boundary_data, dtype=float)
    h2 = _split_boundary_data(system, h)

    ode = ReducedProfileODE(system, endstate)
    m = ode.m
    w_plus = W_plus[m:]
    J = ode.linearization()
    split = ordered_schur(J, lambda w: np.real(w) < 0)
    s = split.k
    Qs, Qu = real_subspace(split.basis)
    rate = _endstate_rate(system, endstate)
    if length is None:
        if rate:
            length = float(np.log(10.0 / tol) / rate)
        else:
            B11 = np.linalg.norm(endstate.B[0, 0])
            A1 = max(np.linalg.norm(endstate.dF[0]), 1e-12)
            length = PROFILE_DEFAULT_LENGTHS * B11 / A1
    x = stretched_grid(length, nodes, stretch)
    logger.info("Solving %s profile on [0, %.3g] (s=%d of r=%d stable directions)", system.name, length, s, system.r)

    same_hyp = h.size == system.r or np.allclose(h[:m], W_plus[:m], rtol=0.0, atol=1e-15)
    if same_hyp and np.allclose(h2, w_plus, rtol=0.0, atol=1e-15):
        prof = constant_profile(system, endstate, length, nodes, stretch)
        return prof

    guess = np.tile(w_plus[:, None], (1, x.size))
    sol = None
    for step in range(1, homotopy_steps + 1):
        t = step / homotopy_steps
        target = w_plus + t * (h2 - w_plus)
        sol = _solve_once(ode, x if sol is None else sol.x, guess if sol is None else sol.y, target, Qs, Qu, tol)
        if sol.status != 0:
            res = float(np.max(sol.rms_residuals)) if sol.rms_residuals is not None else float("nan")
            logger.error("Profile collocation failed at homotopy step %d/%d: %s", step, homotopy_steps, sol.message)
            raise NoProfileFoundError(
                f"collocation did not converge at homotopy step {step}/{homotopy_steps}: {sol.message}",
                residual=res, step=step,
            )
        logger.debug("Homotopy step %d/%d: %d nodes, max residual %.2e", step, homotopy_steps,
                     sol.x.size, float(np.max(sol.rms_residuals)))

    w_nodes = sol.sol(x)
    U = np.array([ode.state(w_nodes[:, i]) for i in range(x.size)])
    Up = np.empty_like(U)
    for i in range(x.size):
        w = w_nodes[:, i]
        Up[i] = fd_jacobian(ode.state, w) @ ode.rhs(w)

    # trace at x₁ = 0 must match the requested data
    trace = system.to_w(U[0])
    want = h if h.size == system.n else np.concatenate((trace[:m], h2))
    trace_err = float(np.max(np.abs(trace - want)))
    if trace_err > max(1e3 * tol, 1e-8) * (1.0 + np.max(np.abs(want))):
        raise NoProfileFoundError(
            f"no layer with the requested trace: |W̃(Ū(0)) − h| = {trace_err:.3e}",
            residual=trace_err, trace=trace.tolist(),
        )

    steady = _steady_defect(system, U, Up, ode.F_plus)
    fi = float(np.max(steady[:, :m], initial=0.0))
    collocation = float(np.max(sol.rms_residuals))
    residual = max(collocation, float(steady.max()))
    spline = _steady_defect(system, U, _spline(x, U).derivative()(x), ode.F_plus)

    theta, C = fit_tail(x, U, endstate.U, rate)
    logger.info("Profile solved: amplitude %.3e, θ_prof %.3g, residual %.2e (spline %.2e)",
                float(np.max(np.linalg.norm(U - endstate.U, axis=1))), theta, residual, float(spline.max()))
    return ProfileGrid(system.name, x, U, Up, endstate.U.copy(), theta, C, residual,
                       boundary_data=h, meta={"constant": False, "stable_directions": s,
                                              "collocation_residual": collocation,
                                              "steady_residual": float(steady.max()),
                                              "spline_residual": float(spline.max()),
                                              "first_integral_residual": fi,
                                              "trace_error": trace_err})


def _spline(x: np.ndarray, U: np.ndarray):
    return make_interp_spline(x, U, k=min(5, x.size - 1))


def _steady_defect(system: SystemModel, U: np.ndarray, Up: np.ndarray, F_plus: np.ndarray) -> np.ndarray:
    """|B¹¹(Ū)Ū' − F¹(Ū) + F¹(U₊)| row by row at every node, shape (M+1, n)."""
    B11 = system.viscosity_on(U)[:, 0, 0]
    F1 = system.flux_on(U)[:, 0]
    return np.abs(np.einsum("iab,ib->ia", B11, Up) - F1 + F_plus)


def steady_residual(system: SystemModel, profile: ProfileGrid, *, derivative: str = "nodes") -> np.ndarray:
    """
    Nodewise defect of the once-integrated steady equation, max over rows.

    ``derivative="nodes"`` uses the stored Ū' (the reduced ODE evaluated at
    each node); ``"spline"`` differentiates the quintic interpolant that
    ``ProfileGrid.state`` uses, so it also measures interpolation error.
    """
    if derivative == "nodes":
        Up = profile.Up
    elif derivative == "spline":
        Up = profile_derivatives(profile, 1)
    else:
        raise RejectedInputError(f"derivative must be 'nodes' or 'spline', got '{derivative}'")
    return _steady_defect(system, profile.U, Up, system.flux(profile.endstate)[0]).max(axis=1)


def refinement_check(
    system: SystemModel,
    endstate: Endstate,
    boundary_data: np.ndarray | None = None,
    *,
    nodes: tuple[int, ...] = (8, 16, 32),
    length: float | None = None,
    tol: float = PROFILE_TOL,
    stretch: float = PROFILE_STRETCH,
    min_order: float = 2.0,
) -> CheckResult:
    """
    Observed order of the profile interpolant under grid doubling.

    Each grid doubles the previous one on a fixed length, so every coarse
    node is a fine node.  The error of a grid is the quintic interpolant of
    its nodes against the solved values at the interleaved fine nodes.
    Errors below 10·tol are at the collocation floor and give no order.
    """
    nodes = tuple(int(M) for M in nodes)
    if len(nodes) < 2 or any(b != 2 * a for a, b in zip(nodes[:-1], nodes[1:])):
        raise RejectedInputError(f"refinement grids must double, got {list(nodes)}")
    first = solve_profile(system, endstate, boundary_data, length, tol, nodes=nodes[0], stretch=stretch)
    profiles = [first] + [solve_profile(system, endstate, boundary_data, first.length, tol, nodes=M,
                                        stretch=stretch) for M in nodes[1:]]
    floor = 10.0 * tol * (1.0 + float(np.max(np.abs(endstate.U))))
    errors, drift = [], []
    for coarse, fine in zip(profiles[:-1], profiles[1:]):
        if coarse.is_constant:
            errors.append(0.0)
            drift.append(0.0)
            continue
        odd = fine.x[1::2]
        errors.append(float(np.max(np.abs(_spline(coarse.x, coarse.U)(odd) - fine.U[1::2]))))
        drift.append(float(np.max(np.abs(fine.U[::2] - coarse.U))))
    orders = [float(np.log2(a / b)) for a, b in zip(errors[:-1], errors[1:]) if b > floor]
    measured = {"nodes": list(nodes), "length": first.length, "errors": errors, "node_drift": drift,
                "orders": orders, "floor": floor, "min_order": min_order}
    logger.info("Profile refinement on %s: errors %s, orders %s", system.name,
                ", ".join(f"{e:.2e}" for e in errors), ", ".join(f"{o:.2f}" for o in orders))
    if not orders:
        return CheckResult("profile-refinement", Verdict.PASS, measured,
                           note="interpolation error at the collocation floor on every grid")
    worst = min(orders)
    if worst >= min_order:
        return CheckResult("profile-refinement", Verdict.PASS, measured)
    return CheckResult("profile-refinement", Verdict.FAIL, measured, {"order": worst, "residual": worst})


def fit_tail(x: np.ndarray, U: np.ndarray, U_plus: np.ndarray, rate: float | None) -> tuple[float, float]:
    """Exponential fit of |Ū − U₊| on the tail, where it is above rounding."""
    dev = np.linalg.norm(U - U_plus, axis=1)
    floor = 1e-13 * (1.0 + np.linalg.norm(U_plus))
    tail = (x >= 0.25 * x[-1]) & (dev > floor)
    if tail.sum() < 3:
        tail = dev > floor
    if tail.sum() < 3:
        return (rate or 1.0), float(dev.max())
    theta, C = fit_exponential_rate(x[tail], dev[tail])
    C = max(C, float(np.max(dev * np.exp(theta * x))))
    return theta, C


def profile_derivatives(profile: ProfileGrid, order: int) -> np.ndarray:
    """
    Grid samples of ∂^k Ū, k ≤ 2, from a quintic spline through the nodes.

    The stretched grid carries no spectral basis, so derivatives are local:
    the first derivative is O(h⁵) accurate and the second O(h⁴).  This is the
    same interpolant ``ProfileGrid.state`` evaluates between nodes.
    """
    if order == 0:
        return profile.U.copy()
    if order not in (1, 2):
        raise RejectedInputError(f"derivative order must be 0, 1 or 2, got {order}")
    if profile.is_constant:
        return np.zeros_like(profile.U)
    return np.asarray(_spline(profile.x, profile.U).derivative(order)(profile.x))


def amplitude_homotopy(system: SystemModel, endstate: Endstate, boundary_data: np.ndarray,
                       fractions, **kwargs) -> list[ProfileGrid]:
    """
    Profiles for w̃^II data w₊ + t·(h^II − w₊), one per fraction t.

    Only the parabolic trace is scaled; the hyperbolic trace follows from
    the first integral.
    """
    h2 = _split_boundary_data(system, np.asarray(boundary_data, dtype=float))
    base = system.to_w(endstate.U)[system.n_hyp:]
    return [solve_profile(system, endstate, base + float(t) * (h2 - base), **kwargs) for t in fractions]


# ─── CSV import / export ──────────────────────────────────────

def export_profile(profile: ProfileGrid, path: str | Path, section_hash: str = "") -> Path:
    """Write (x₁, Ū, Ū') columns plus a JSON sidecar next to the CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = profile.U.shape[1]
    header = ",".join(["x1"] + [f"U{i + 1}" for i in range(n)] + [f"dU{i + 1}" for i in range(n)])
    np.savetxt(path, np.column_stack((profile.x, profile.U, profile.Up)), delimiter=",",
               header=header, comments="", fmt="%.17g")
    meta = {
        "section_hash": section_hash,
        "endstate": profile.endstate.tolist(),
        "boundary_data": None if profile.boundary_data is None else np.asarray(profile.boundary_data).tolist(),
        **profile.to_dict(),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return path


def import_profile(path: str | Path, system: SystemModel, endstate: Endstate | None = None) -> ProfileGrid:
    """Read a profile CSV written by ``export_profile`` or by an external solver."""
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = system.n
    if data.shape[1] != 1 + 2 * n:
        raise RejectedInputError(f"{path}: expected {1 + 2 * n} columns for {system.name}, got {data.shape[1]}")
    x, U, Up = data[:, 0], data[:, 1:1 + n], data[:, 1 + n:]
    if x[0] != 0.0 or np.any(np.diff(x) <= 0):
        raise RejectedInputError(f"{path}: grid must start at 0 and increase strictly")
    meta: dict[str, Any] = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    U_plus = endstate.U if endstate is not None else np.asarray(meta.get("endstate", U[-1]), dtype=float)
    theta, C = fit_tail(x, U, U_plus, None)
    residual = float(meta.get("residual", float("nan")))
    bd = meta.get("boundary_data")
    return ProfileGrid(system.name, x, U, Up, np.asarray(U_plus, dtype=float), theta, C, residual,
                       boundary_data=None if bd is None else np.asarray(bd, dtype=float),
                       meta={"imported": str(path), "section_hash": meta.get("section_hash", "")})

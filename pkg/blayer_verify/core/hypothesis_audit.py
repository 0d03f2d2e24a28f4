"""
hypothesis_audit — Numerical falsifiers for the structural hypotheses.

Each check samples, clusters and root-finds; it never proves.  A ``fail``
always carries a witness (a frequency or grid point plus the residual that
decided it), and ``indeterminate`` carries the data that stopped the
decision.

Checks
------
  A1   symmetrizer: Ã⁰ block diagonal and positive, Ã^j symmetric
  A2   genuine coupling: no eigenvector of Ã_ξ lies in ker B̃_ξ
  A3   parabolicity of b̃: Σ b̃^{jk}ξ_jξ_k ≥ θ|ξ|²
  H1   noncharacteristic layer: A_* sign-definite along the profile
  H2   dF¹(U₊) has distinct nonzero eigenvalues
  H3   constant multiplicity of the symbol branches, (H3') otherwise
  H4'  nonvanishing tangential gradient at glancing points
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.stats import qmc

from blayer_verify.configs.constants import (
    GENUINE_COUPLING_TOL,
    SEMISIMPLE_CONDITION_MAX,
    SYMMETRY_TOL,
)
from blayer_verify.configs.settings import SpherePlan
from blayer_verify.core.branches import (
    branch_gradient,
    cluster_derivatives,
    cluster_tolerance,
    multiplicity_pattern,
    normal_derivative_sign,
    sorted_clusters,
    sorted_eigenvalues,
)
from blayer_verify.core.model_core import (
    Endstate,
    SystemModel,
    jacobians,
    symbol,
    viscous_symbol,
)
from blayer_verify.core.verdicts import CheckResult, Verdict
from blayer_verify.errors import CoefficientDegeneracyError
from blayer_verify.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

H1_CAVEAT = "sign tested on A_*, the convection block of the W-system; Ã¹₁₁ reported alongside"


# ─── Report ───────────────────────────────────────────────────

@dataclass(frozen=True)
class GlancingPoint:
    """A root of ∂_{ξ₁}λ_k on the sphere with the gradient measured there."""

    xi: np.ndarray
    branch: tuple[int, ...]
    value: float
    gradient: np.ndarray

    @property
    def tangential_norm(self) -> float:
        return float(np.linalg.norm(self.gradient[1:]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "xi": self.xi.tolist(),
            "branch": list(self.branch),
            "lambda": self.value,
            "gradient": self.gradient.tolist(),
            "tangential_norm": self.tangential_norm,
        }


@dataclass(frozen=True)
class AuditReport:
    system: str
    checks: dict[str, CheckResult]
    direction: str | None
    glancing: tuple[GlancingPoint, ...] = ()
    multiplicities: dict[str, Any] = field(default_factory=dict)

    @property
    def verdict(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "verdict": self.verdict.value,
            "direction": self.direction,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "glancing_points": [g.to_dict() for g in self.glancing],
            "multiplicities": self.multiplicities,
        }


# ─── Sphere sampling ──────────────────────────────────────────

def sphere_angles(n: int) -> np.ndarray:
    """Offset equispaced angles; the half-step keeps samples off the coordinate axes."""
    return 2.0 * np.pi * (np.arange(n) + 0.5) / n


def sphere_points(d: int, plan: SpherePlan) -> np.ndarray:
    """Deterministic samples on the sphere of radius ``plan.radius``, shape (N, d)."""
    n = plan.samples * d
    if d == 1:
        pts = np.array([[1.0], [-1.0]])
    elif d == 2:
        t = sphere_angles(n)
        pts = np.column_stack((np.cos(t), np.sin(t)))
    else:
        m = int(np.ceil(np.log2(n)))
        if plan.sequence == "sobol":
            uv = qmc.Sobol(d=2, scramble=False).random_base2(m)
        else:
            uv = qmc.Halton(d=2, scramble=False).random(2 ** m)
        z = 1.0 - 2.0 * uv[:, 0]
        phi = 2.0 * np.pi * uv[:, 1]
        s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
        pts = np.column_stack((z, s * np.cos(phi), s * np.sin(phi)))
        if d > 3:
            pts = np.column_stack((pts, np.zeros((pts.shape[0], d - 3))))
    return plan.radius * pts


def _polar(d: int, radius: float, angles: np.ndarray) -> np.ndarray:
    if d == 2:
        return radius * np.array([np.cos(angles[0]), np.sin(angles[0])])
    th, ph = angles
    return radius * np.array([np.cos(th), np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph)])


# ─── (A1)–(A3) ────────────────────────────────────────────────

def audit_structure(system: SystemModel, endstate: Endstate, plan: SpherePlan | None = None) -> dict[str, CheckResult]:
    """Symmetrizer, genuine coupling and viscous definiteness at W̃₊."""
    plan = plan or SpherePlan()
    if endstate.A0_sym is None:
        na = {"note": "no symmetrized form registered"}
        return {k: CheckResult(k, Verdict.NOT_APPLICABLE, na) for k in ("A1", "A2", "A3")}

    m = system.n_hyp
    A0, A, B = endstate.A0_sym, endstate.A_sym, endstate.B_sym
    mats = [A0] + list(A)
    residual = float(max(np.max(np.abs(M - M.T)) for M in mats))
    scale = max(1.0, float(max(np.max(np.abs(M)) for M in mats)))
    block_off = float(np.max(np.abs(A0[:m, m:]), initial=0.0)) if 0 < m < system.n else 0.0
    theta0 = float(np.min(np.linalg.eigvalsh(0.5 * (A0 + A0.T))))
    a11 = A[0][:m, :m]
    a11_residual = float(np.max(np.abs(a11 - a11.T), initial=0.0))
    ok = residual <= SYMMETRY_TOL * scale and block_off <= SYMMETRY_TOL * scale and theta0 > 0
    a1 = CheckResult(
        "A1",
        Verdict.PASS if ok else Verdict.FAIL,
        {"symmetry_residual": residual, "block_residual": block_off, "theta0": theta0,
         "a11_symmetry_residual": a11_residual},
        None if ok else {"W": endstate.W, "residual": max(residual, block_off), "theta0": theta0},
    )

    pts = sphere_points(system.d, plan)
    if system.r == 0 or system.hyperbolic_only:
        a2 = CheckResult("A2", Verdict.NOT_APPLICABLE, {"note": "no parabolic block"})
        a3 = CheckResult("A3", Verdict.NOT_APPLICABLE, {"note": "no parabolic block"})
        return {"A1": a1, "A2": a2, "A3": a3}

    # (A3): smallest eigenvalue of the parabolic block of B̃_ξ / |ξ|²
    theta, theta_xi = np.inf, None
    for xi in pts:
        b = viscous_symbol(B, xi)[m:, m:]
        val = float(np.min(np.linalg.eigvalsh(0.5 * (b + b.T)))) / float(xi @ xi)
        if val < theta:
            theta, theta_xi = val, xi
    a3_ok = theta > SYMMETRY_TOL
    a3 = CheckResult(
        "A3",
        Verdict.PASS if a3_ok else Verdict.FAIL,
        {"theta": theta},
        None if a3_ok else {"xi": theta_xi, "residual": theta},
    )

    # (A2): every eigenspace of Ã_ξ v = μ Ã⁰ v is moved by B̃_ξ
    coupling, coupling_xi = np.inf, None
    for xi in pts:
        Axi = symbol(A, xi)
        Bxi = viscous_symbol(B, xi)
        mu, V = sla.eigh(0.5 * (Axi + Axi.T), 0.5 * (A0 + A0.T))
        tol = cluster_tolerance(mu, plan.cluster_rel_tol)
        for group in sorted_clusters(mu, tol):
            E = sla.orth(V[:, group])
            s = float(np.min(np.linalg.svd(Bxi @ E, compute_uv=False))) / float(xi @ xi)
            if s < coupling:
                coupling, coupling_xi = s, xi
    a2_ok = coupling > GENUINE_COUPLING_TOL
    a2 = CheckResult(
        "A2",
        Verdict.PASS if a2_ok else Verdict.FAIL,
        {"coupling": coupling},
        None if a2_ok else {"xi": coupling_xi, "residual": coupling},
    )
    logger.info("Structure audit: A1=%s A2=%s A3=%s (θ₀=%.3g, θ=%.3g)",
                a1.verdict.value, a2.verdict.value, a3.verdict.value, theta0, theta)
    return {"A1": a1, "A2": a2, "A3": a3}


# ─── (H1) ─────────────────────────────────────────────────────

def a_star(system: SystemModel, U: np.ndarray) -> np.ndarray:
    """A_* = A¹₁₁ − A¹₁₂ (b₂¹¹)⁻¹ b₁¹¹ at U."""
    m = system.n_hyp
    A1 = jacobians(system, U)[0]
    B11 = system.viscosity_at(U)[0, 0]
    b1, b2 = B11[m:, :m], B11[m:, m:]
    try:
        correction = np.linalg.solve(b2, b1)
    except np.linalg.LinAlgError as e:
        logger.error("b₂¹¹ is singular at U=%s", U)
        raise CoefficientDegeneracyError(f"b₂¹¹ singular at U={U}", state=U) from e
    if np.linalg.cond(b2) > 1e12:
        raise CoefficientDegeneracyError(f"b₂¹¹ singular at U={U}", state=U, cond=float(np.linalg.cond(b2)))
    return A1[:m, :m] - A1[:m, m:] @ correction


def audit_H1(system: SystemModel, endstate: Endstate, profile: Any = None) -> CheckResult:
    """
    Sign of A_* along the profile (or at U₊ alone when no profile is given).

    ``profile`` is anything with ``x`` (M+1,) and ``U`` (M+1, n) arrays.
    """
    if system.hyperbolic_only:
        return CheckResult("H1", Verdict.NOT_APPLICABLE, {"note": "purely hyperbolic symbol"})
    if system.n_hyp == 0:
        drift = float(np.mean(np.real(np.linalg.eigvals(endstate.dF[0]))))
        direction = "inflow" if drift > 0 else "outflow"
        return CheckResult("H1", Verdict.NOT_APPLICABLE, {"direction": direction, "drift": drift},
                           note="no hyperbolic block; direction from the normal drift")

    if profile is None:
        xs, states = np.array([np.inf]), endstate.U[None, :]
    else:
        xs, states = np.asarray(profile.x), np.asarray(profile.U)
    eigs = np.array([np.real(np.linalg.eigvals(a_star(system, U))) for U in states])
    lo, hi = eigs.min(axis=1), eigs.max(axis=1)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    tol = 1e-10 * scale

    m = system.n_hyp
    a11 = endstate.A_sym[0][:m, :m] if endstate.A_sym is not None else None
    a11_sign = None
    if a11 is not None:
        ev = np.linalg.eigvalsh(0.5 * (a11 + a11.T))
        a11_sign = 1 if np.all(ev > 0) else (-1 if np.all(ev < 0) else 0)

    measured: dict[str, Any] = {"a11_sign": a11_sign, "min_eig": float(lo.min()), "max_eig": float(hi.max())}
    if np.all(lo > tol):
        measured.update(direction="inflow", theta1=float(lo.min()))
        verdict, direction, witness = Verdict.PASS, "inflow", None
    elif np.all(hi < -tol):
        measured.update(direction="outflow", theta1=float(-hi.max()))
        verdict, direction, witness = Verdict.PASS, "outflow", None
    else:
        bad = np.flatnonzero((lo <= tol) & (hi >= -tol))
        bad = bad if bad.size else np.flatnonzero(np.sign(lo) != np.sign(lo[-1]))
        i = int(bad[0]) if bad.size else 0
        verdict, direction = Verdict.FAIL, None
        witness = {"x1": float(xs[i]), "state": states[i], "eigenvalues": eigs[i]}
    logger.info("H1: %s (direction %s)", verdict.value, direction)
    return CheckResult("H1", verdict, measured, witness, note=H1_CAVEAT)


def layer_direction(h1: CheckResult) -> str | None:
    return h1.measured.get("direction")


# ─── (H2) ─────────────────────────────────────────────────────

def audit_H2(system: SystemModel, endstate: Endstate, plan: SpherePlan | None = None) -> CheckResult:
    plan = plan or SpherePlan()
    w = sorted_eigenvalues(endstate.dF[0])
    tau = cluster_tolerance(w, plan.cluster_rel_tol)
    gaps = np.abs(np.diff(w)) if w.size > 1 else np.array([np.inf])
    min_gap = float(gaps.min())
    min_abs = float(np.min(np.abs(w)))
    max_imag = float(np.max(np.abs(np.imag(w))))
    ok = min_gap > tau and min_abs > tau and max_imag <= tau
    witness = None
    if not ok:
        i = int(np.argmin(np.abs(w)))
        witness = {"eigenvalues": w, "residual": min(min_gap, min_abs), "closest_to_zero": w[i]}
    return CheckResult("H2", Verdict.PASS if ok else Verdict.FAIL,
                       {"eigenvalues": w, "min_gap": min_gap, "min_abs": min_abs, "tau": tau}, witness)


# ─── (H3) / (H3') ─────────────────────────────────────────────

@dataclass(frozen=True)
class _Crossing:
    xi: np.ndarray
    slots: list[int]
    gap: float
    tau: float


def _gap(jacs: np.ndarray, xi: np.ndarray, k: int) -> float:
    w = sorted_eigenvalues(symbol(jacs, xi))
    return float(abs(w[k + 1] - w[k]))


def _refine_gap(jacs: np.ndarray, d: int, radius: float, k: int, start: np.ndarray, width: float) -> tuple[np.ndarray, float]:
    if d == 2:
        res = minimize_scalar(
            lambda t: _gap(jacs, _polar(2, radius, np.array([t])), k),
            bounds=(start[0] - width, start[0] + width),
            method="bounded",
            options={"xatol": 1e-13},
        )
        return _polar(2, radius, np.array([res.x])), float(res.fun)
    res = minimize(
        lambda a: _gap(jacs, _polar(3, radius, a), k),
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 4000},
    )
    return _polar(3, radius, res.x), float(res.fun)


def _angles_of(xi: np.ndarray) -> np.ndarray:
    r = float(np.linalg.norm(xi))
    if xi.size == 2:
        return np.array([np.arctan2(xi[1], xi[0])])
    return np.array([np.arccos(np.clip(xi[0] / r, -1, 1)), np.arctan2(xi[2], xi[1])])


@dataclass(frozen=True)
class H3Result:
    h3: CheckResult
    h3prime: CheckResult
    constant_clusters: tuple[tuple[int, ...], ...]
    crossings: tuple[dict[str, Any], ...] = ()


def audit_H3(system: SystemModel, endstate: Endstate, plan: SpherePlan | None = None) -> H3Result:
    """Multiplicity map of the symbol branches over the sphere."""
    plan = plan or SpherePlan()
    jacs = endstate.dF
    d, n = system.d, system.n
    pts = sphere_points(d, plan)
    eigs = np.array(parallel_map(lambda xi: sorted_eigenvalues(symbol(jacs, xi)), list(pts)))
    taus = np.array([cluster_tolerance(w, plan.cluster_rel_tol) for w in eigs])

    gaps = np.abs(np.diff(eigs, axis=1)) if n > 1 else np.zeros((len(pts), 0))
    merged = np.all(gaps <= taus[:, None], axis=0) if n > 1 else np.zeros(0, dtype=bool)
    sometimes = np.any(gaps <= taus[:, None], axis=0) & ~merged if n > 1 else merged

    crossings: list[_Crossing] = []
    indeterminate: list[dict[str, Any]] = []
    for k in np.flatnonzero(sometimes):
        i = int(np.argmin(gaps[:, k]))
        crossings.append(_Crossing(pts[i], [int(k), int(k) + 1], float(gaps[i, k]), float(taus[i])))

    if d >= 2:
        width = 2.0 * np.pi / len(pts) * 2.0 if d == 2 else 0.2
        for k in np.flatnonzero(~merged & ~sometimes):
            col = gaps[:, k]
            if d == 2:
                cand = np.flatnonzero((col <= np.roll(col, 1)) & (col <= np.roll(col, -1)))
            else:
                cand = np.argsort(col)[:3]
            for i in cand:
                xi_star, g = _refine_gap(jacs, d, plan.radius, int(k), _angles_of(pts[i]), width)
                tau = cluster_tolerance(sorted_eigenvalues(symbol(jacs, xi_star)), plan.cluster_rel_tol)
                if g < tau:
                    crossings.append(_Crossing(xi_star, [int(k), int(k) + 1], g, tau))
                elif g < 10.0 * tau:
                    indeterminate.append({"xi": xi_star, "slots": [int(k), int(k) + 1], "gap": g, "tau": tau})

    # constant-multiplicity clusters: runs of always-merged slots
    groups: list[list[int]] = [[0]]
    for k in range(n - 1):
        if merged[k]:
            groups[-1].append(k + 1)
        else:
            groups.append([k + 1])
    constant = tuple(tuple(g) for g in groups)

    # semisimplicity of merged clusters
    worst_cond = 1.0
    for xi in pts[:: max(1, len(pts) // 16)]:
        A = symbol(jacs, xi)
        for g in groups:
            if len(g) > 1:
                w = sorted_eigenvalues(A)
                mu = np.mean(w[g])
                rank = np.linalg.matrix_rank(A - mu * np.eye(n), tol=1e-8 * max(1.0, np.abs(w).max()))
                if rank > n - len(g):
                    worst_cond = np.inf
        _, V = np.linalg.eig(A)
        worst_cond = max(worst_cond, float(np.linalg.cond(V)))
    semisimple = worst_cond <= SEMISIMPLE_CONDITION_MAX

    pattern = multiplicity_pattern(eigs[0], taus[0])
    measured = {"pattern": pattern, "constant_clusters": [list(g) for g in constant],
                "eigenvector_condition": worst_cond, "samples": len(pts)}

    crossing_dicts = []
    tn_ok = True
    for c in crossings:
        sign = normal_derivative_sign(jacs, c.xi, c.slots)
        tn_ok &= sign != 0
        crossing_dicts.append({"xi": c.xi, "slots": c.slots, "gap": c.gap, "tau": c.tau,
                               "normal_sign": sign})

    if crossings:
        h3 = CheckResult("H3", Verdict.FAIL, measured, crossing_dicts[0])
    elif indeterminate:
        h3 = CheckResult("H3", Verdict.INDETERMINATE, measured, indeterminate[0])
    elif not semisimple:
        h3 = CheckResult("H3", Verdict.FAIL, measured, {"condition": worst_cond})
    else:
        h3 = CheckResult("H3", Verdict.PASS, measured)

    if h3.verdict is Verdict.PASS:
        h3p = CheckResult("H3prime", Verdict.PASS, {"mode": "constant multiplicity"})
    elif crossings and tn_ok and semisimple:
        h3p = CheckResult("H3prime", Verdict.PASS, {"mode": "totally nonglancing", "crossings": len(crossings)})
    elif crossings:
        bad = next(c for c in crossing_dicts if c["normal_sign"] == 0) if not tn_ok else crossing_dicts[0]
        h3p = CheckResult("H3prime", Verdict.FAIL, {"mode": "glancing crossing"}, bad)
    else:
        h3p = CheckResult("H3prime", h3.verdict, measured, h3.witness)
    logger.info("H3: %s, H3': %s (%d crossings)", h3.verdict.value, h3p.verdict.value, len(crossings))
    return H3Result(h3, h3p, constant, tuple(crossing_dicts))


# ─── (H4') ────────────────────────────────────────────────────

def _normal_derivative(jacs: np.ndarray, xi: np.ndarray, members: list[int]) -> float:
    return float(np.mean(np.real(cluster_derivatives(jacs, xi, members, axis=0))))


def _roots_along(jacs, d, radius, members, angles, fixed=None):
    """Roots of θ ↦ ∂_{ξ₁}λ on a great-circle arc; yields (θ, ok, bracket)."""
    def xi_of(t):
        return _polar(d, radius, np.array([t]) if d == 2 else np.array([t, fixed]))

    vals = np.array([_normal_derivative(jacs, xi_of(t), members) for t in angles])
    for i in range(len(angles) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            yield angles[i], True, (angles[i], angles[i])
        elif a * b < 0:
            try:
                t = brentq(lambda s: _normal_derivative(jacs, xi_of(s), members),
                           angles[i], angles[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
                yield t, True, (angles[i], angles[i + 1])
            except (RuntimeError, ValueError):
                yield 0.5 * (angles[i] + angles[i + 1]), False, (angles[i], angles[i + 1])


def find_glancing_points(
    system: SystemModel,
    endstate: Endstate,
    plan: SpherePlan | None = None,
    clusters: tuple[tuple[int, ...], ...] | None = None,
) -> tuple[list[GlancingPoint], list[dict[str, Any]]]:
    """Root-find {∂_{ξ₁}λ_k = 0} on the sphere for every constant-multiplicity branch."""
    plan = plan or SpherePlan()
    jacs = endstate.dF
    d = system.d
    if clusters is None:
        clusters = tuple((k,) for k in range(system.n))
    points: list[GlancingPoint] = []
    failures: list[dict[str, Any]] = []
    if d == 2:
        n = plan.samples * d
        arcs = [(np.concatenate((sphere_angles(n), [sphere_angles(n)[0] + 2 * np.pi])), None)]
    else:
        meridians = max(8, plan.samples // 15)
        polar = np.linspace(1e-3, np.pi - 1e-3, plan.samples)
        arcs = [(polar, 2.0 * np.pi * (j + 0.5) / meridians) for j in range(meridians)]

    for members in clusters:
        mem = list(members)
        for angles, fixed in arcs:
            for t, ok, bracket in _roots_along(jacs, d, plan.radius, mem, angles, fixed):
                a = np.array([t]) if d == 2 else np.array([t, fixed])
                xi = _polar(d, plan.radius, a)
                if not ok:
                    failures.append({"branch": mem, "bracket": list(bracket), "xi": xi})
                    continue
                grad = branch_gradient(jacs, xi, mem)
                value = float(np.mean(np.real(sorted_eigenvalues(symbol(jacs, xi))[mem])))
                points.append(GlancingPoint(xi, tuple(mem), value, grad))
    return points, failures


def audit_H4prime(
    system: SystemModel,
    endstate: Endstate,
    plan: SpherePlan | None = None,
    h3: H3Result | None = None,
) -> tuple[CheckResult, list[GlancingPoint]]:
    """Tangential gradient at every glancing point must exceed τ_grad."""
    plan = plan or SpherePlan()
    if system.d == 1:
        return CheckResult("H4prime", Verdict.NOT_APPLICABLE, {"note": "no tangential directions"}), []
    h3 = h3 or audit_H3(system, endstate, plan)
    points, failures = find_glancing_points(system, endstate, plan, h3.constant_clusters)
    min_grad = min((p.tangential_norm for p in points), default=float("inf"))
    measured = {"glancing_points": len(points), "min_tangential_gradient": min_grad,
                "gradient_tol": plan.gradient_tol}
    bad = [p for p in points if p.tangential_norm <= plan.gradient_tol]
    if bad:
        worst = min(bad, key=lambda p: p.tangential_norm)
        result = CheckResult("H4prime", Verdict.FAIL, measured,
                             {**worst.to_dict(), "residual": worst.tangential_norm,
                              "all": [p.xi for p in bad]})
    elif failures:
        result = CheckResult("H4prime", Verdict.INDETERMINATE, measured, failures[0])
    else:
        result = CheckResult("H4prime", Verdict.PASS, measured)
    logger.info("H4': %s (%d glancing points, min |∇_ξ̃λ| = %.3g)", result.verdict.value, len(points), min_grad)
    return result, points


# ─── Full audit ───────────────────────────────────────────────

def run_audit(system: SystemModel, endstate: Endstate, plan: SpherePlan | None = None,
              profile: Any = None) -> AuditReport:
    plan = plan or SpherePlan()
    logger.info("Auditing %s at U₊=%s", system.name, endstate.U)
    checks = dict(audit_structure(system, endstate, plan))
    h1 = audit_H1(system, endstate, profile)
    checks["H1"] = h1
    checks["H2"] = audit_H2(system, endstate, plan)
    h3 = audit_H3(system, endstate, plan)
    checks["H3"] = h3.h3
    checks["H3prime"] = h3.h3prime
    h4, points = audit_H4prime(system, endstate, plan, h3)
    checks["H4prime"] = h4
    return AuditReport(
        system=system.name,
        checks=checks,
        direction=layer_direction(h1),
        glancing=tuple(points),
        multiplicities={"constant_clusters": [list(g) for g in h3.constant_clusters],
                        "crossings": [{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in c.items()}
                                      for c in h3.crossings]},
    )

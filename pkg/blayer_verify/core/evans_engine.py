"""
evans_engine — Eigenvalue ODE of the linearized layer and its Evans function.

For a frequency (ξ̃, λ) the Fourier-transformed problem (L_ξ̃ − λ)U = g is
rewritten as a first-order system W' = G(x₁) W + φ(x₁) in W = (m, z),

    m = M U,                    M = [A¹_I ; B¹¹_II],
    z = B¹¹_II U' + E U − A¹_II U,

of size n + r, where A^j = dF^j(Ū) − dB^{j1}(Ū)[·]Ū' and E = Σ_{k≥2} iξ_k B^{1k}_II.
The boundary condition is Γ W(0) = 0.  The Evans function pairs Γ with
the subspace of solutions decaying at +∞, transported from x₁ = L to 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.interpolate import make_interp_spline

from blayer_verify.configs.constants import (
    COMPOUND_MAX_DIM,
    CONJUGATOR_BOUND,
    EVANS_ATOL,
    EVANS_RTOL,
    SEMISIMPLE_CONDITION_MAX,
    WINDING_TOL,
)
from blayer_verify.configs.settings import EvansSection
from blayer_verify.core.hypothesis_audit import audit_H1, layer_direction
from blayer_verify.core.model_core import (
    Endstate,
    SystemModel,
    directional_derivative,
    jacobians,
    viscosity_derivative,
    w_jacobian,
)
from blayer_verify.core.profile_solver import ProfileGrid
from blayer_verify.core.verdicts import CheckResult, Verdict, to_jsonable
from blayer_verify.errors import (
    CoefficientDegeneracyError,
    ConjugationFailure,
    IntegrationFailure,
    NonHyperbolicFrequencyError,
    RejectedInputError,
)
from blayer_verify.utils.fitting import fit_exponential_rate
from blayer_verify.utils.linalg import (
    SchurSplit,
    block_diagonalizer,
    compound_matrix,
    compound_stencil,
    ordered_schur,
    plucker,
    wedge_pairing,
)
from blayer_verify.utils.parallel import parallel_map
from blayer_verify.utils.quadrature import phi1, phi2
from blayer_verify.utils.winding import adaptive_winding, half_disk_path

logger = logging.getLogger(__name__)

Array = np.ndarray

NORMALIZATION = "det(Gamma Psi(0)); Gamma orthonormal rows; Psi growth-normalized, continued stable basis"
HYPERBOLICITY_TOL = 1e-10


# ─── Frequencies ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FrequencyPoint:
    """ζ = (τ, γ, ξ̃) with λ = γ + iτ."""

    xi: Array
    lam: complex

    @classmethod
    def make(cls, xi: Any, lam: complex) -> "FrequencyPoint":
        return cls(np.atleast_1d(np.asarray(xi, dtype=float)).ravel(), complex(lam))

    @property
    def gamma(self) -> float:
        return self.lam.real

    @property
    def tau(self) -> float:
        return self.lam.imag

    @property
    def xi_norm(self) -> float:
        return float(np.linalg.norm(self.xi))

    @property
    def rho(self) -> float:
        return float(np.hypot(self.xi_norm, abs(self.lam)))

    @property
    def polar(self) -> tuple[float, float, Array]:
        """(τ̂, γ̂, ξ̂) with ζ = ρ ζ̂."""
        rho = self.rho
        if rho == 0.0:
            raise RejectedInputError("polar coordinates are undefined at ρ = 0")
        return self.tau / rho, self.gamma / rho, self.xi / rho

    def conjugate(self) -> "FrequencyPoint":
        """(−ξ̃, λ̄), where the coefficients of the eigenvalue ODE are conjugated."""
        return FrequencyPoint(-self.xi, self.lam.conjugate())

    def to_dict(self) -> dict[str, Any]:
        return {"xi": self.xi.tolist(), "lambda": to_jsonable(self.lam), "rho": self.rho}


# ─── Layer coefficients ───────────────────────────────────────

@dataclass(frozen=True)
class Coefficients:
    """λ- and ξ̃-free coefficients of the W-system at one x₁."""

    M: Array          # (n, n)   [A¹_I ; B¹¹_II]
    P: Array          # (n, n)   M⁻¹
    A: Array          # (d, n, n)  dF^j − dB^{j1}[·]Ū'
    B: Array          # (d, d, r, n)  parabolic rows of B^{jk}
    dA1: Array        # (n − r, n)   ∂_{x₁} A¹_I
    dB11: Array       # (r, n)       ∂_{x₁} B¹¹_II


def coefficients_at(system: SystemModel, U: Array, Up: Array) -> Coefficients:
    n, m = system.n, system.n_hyp
    jacs = jacobians(system, U)
    Bv = system.viscosity_at(U)
    A = jacs.copy()
    moving = bool(np.any(Up != 0.0))
    if moving:
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            A[:, :, i] -= viscosity_derivative(system, U, e)[:, 0] @ Up
        dA1 = directional_derivative(lambda V: jacobians(system, V)[0][:m], U, Up)
        dB11 = directional_derivative(lambda V: system.viscosity_at(V)[0, 0][m:], U, Up)
    else:
        dA1 = np.zeros((m, n))
        dB11 = np.zeros((n - m, n))
    M = np.vstack((jacs[0][:m], Bv[0, 0][m:]))
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        logger.error("W-coordinates degenerate at U=%s (cond %.2e)", U, cond)
        raise CoefficientDegeneracyError(
            f"[A¹_I; B¹¹_II] is singular at U={U}", state=np.asarray(U).tolist(), cond=float(cond)
        )
    return Coefficients(M, np.linalg.inv(M), A, Bv[:, :, m:, :], dA1, dB11)


_FIELDS = ("M", "A", "B", "dA1", "dB11")


class LayerCoefficients:
    """
    Coefficients along one profile, interpolated between grid nodes.

    They do not depend on the frequency, so a sweep builds them once.
    Beyond L the endstate values are used; below 0 the values at Ū(0)
    with Ū' = 0 (the layer frozen at the wall).
    """

    def __init__(self, system: SystemModel, profile: ProfileGrid) -> None:
        self.system = system
        self.profile = profile
        self.n, self.r, self.m = system.n, system.r, system.n_hyp
        zero = np.zeros(system.n)
        self.plus = coefficients_at(system, profile.endstate, zero)
        self.left = coefficients_at(system, profile.U[0], zero)
        self._spline = None
        if not profile.is_constant:
            nodes = [coefficients_at(system, U, Up) for U, Up in zip(profile.U, profile.Up)]
            self._shapes = [getattr(self.plus, f).shape for f in _FIELDS]
            flat = np.array([np.concatenate([getattr(c, f).ravel() for f in _FIELDS]) for c in nodes])
            self._spline = make_interp_spline(profile.x, flat, k=min(3, profile.x.size - 1))
            logger.debug("Layer coefficients tabulated at %d nodes", profile.x.size)

    @property
    def length(self) -> float:
        return self.profile.length

    def at(self, x: float) -> Coefficients:
        if self._spline is None or x >= self.profile.x[-1]:
            return self.plus
        if x < 0.0:
            return self.left
        flat = np.asarray(self._spline(x))
        parts, start = {}, 0
        for name, shape in zip(_FIELDS, self._shapes):
            size = int(np.prod(shape))
            parts[name] = flat[start:start + size].reshape(shape)
            start += size
        return Coefficients(P=np.linalg.inv(parts["M"]), **parts)


# ─── First-order system ───────────────────────────────────────

@dataclass(frozen=True)
class Blocks:
    G: Array
    P: Array
    N: Array
    C: Array


def assemble(c: Coefficients, lam: complex, xi: Array, m: int) -> Blocks:
    n = c.M.shape[0]
    r = n - m
    d = c.A.shape[0]
    I = np.eye(n)
    Axi = np.zeros((n, n), dtype=complex)
    E = np.zeros((r, n), dtype=complex)
    C = np.zeros((r, n), dtype=complex)
    K = np.zeros((r, n), dtype=complex)
    for j in range(1, d):
        Axi += 1j * xi[j - 1] * c.A[j]
        E += 1j * xi[j - 1] * c.B[0, j]
        C += 1j * xi[j - 1] * c.B[j, 0]
        for k in range(1, d):
            K += xi[j - 1] * xi[k - 1] * c.B[j, k]
    hyp = -lam * I[:m] - Axi[:m]
    S = np.vstack((hyp, c.dB11 - E + c.A[0][m:]))
    N = np.vstack((hyp - c.dA1, -E + c.A[0][m:]))
    P = c.P
    Z = np.vstack((np.zeros((m, r)), np.eye(r)))
    G = np.block([
        [S @ P, Z],
        [(K + Axi[m:] + lam * I[m:]) @ P - C @ P @ N @ P, -C @ P @ Z],
    ])
    return Blocks(G, P, N, C)


def forcing_vector(b: Blocks, g: Array, m: int) -> Array:
    """φ = ([−g_I; 0], g_II − CP[−g_I; 0]) for the forcing g of (L_ξ̃ − λ)U = g."""
    g = np.asarray(g, dtype=complex)
    r = b.P.shape[0] - m
    top = np.concatenate((-g[:m], np.zeros(r, dtype=complex)))
    return np.concatenate((top, g[m:] - b.C @ b.P @ top))


def recover_state(b: Blocks, W: Array, m: int, g: Array | None = None) -> tuple[Array, Array]:
    """U = P m and U' = PNU + P[:, m:] z (+ P[−g_I; 0])."""
    n = b.P.shape[0]
    U = b.P @ W[:n]
    Up = b.P @ b.N @ U + b.P[:, m:] @ W[n:]
    if g is not None:
        top = np.concatenate((-np.asarray(g)[:m], np.zeros(n - m)))
        Up = Up + b.P @ top
    return U, Up


@dataclass
class FirstOrderSystem:
    """
    W' = G(x₁)W for one frequency, with Γ W(0) = 0.

    ``selection`` marks (in ``scipy.linalg.eigvals(G_plus)`` order) the
    eigenvalues spanning the decaying manifold; by default those with
    negative real part.
    """

    system: SystemModel
    profile: ProfileGrid
    fp: FrequencyPoint
    coefficients: LayerCoefficients
    direction: str
    Gamma: Array
    G_plus: Array
    selection: Array

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def r(self) -> int:
        return self.system.r

    @property
    def size(self) -> int:
        return self.system.n + self.system.r

    @property
    def k_stable(self) -> int:
        return int(self.selection.sum())

    @property
    def length(self) -> float:
        return self.coefficients.length

    def blocks(self, x: float) -> Blocks:
        return assemble(self.coefficients.at(x), self.fp.lam, self.fp.xi, self.system.n_hyp)

    def G(self, x: float) -> Array:
        return self.blocks(x).G

    def forcing(self, x: float, g: Array) -> Array:
        """φ(x₁) such that (L_ξ̃ − λ)U = g reads W' = GW + φ."""
        return forcing_vector(self.blocks(x), g, self.system.n_hyp)

    def recover(self, x: float, W: Array, g: Array | None = None) -> tuple[Array, Array]:
        """U and U' from W (and the forcing g when W solves the inhomogeneous system)."""
        return recover_state(self.blocks(x), W, self.system.n_hyp, g)

    def stable_split(self) -> SchurSplit:
        return ordered_schur(self.G_plus, self.selection)

    def stable_projector(self) -> Array:
        split = self.stable_split()
        V, V_inv = block_diagonalizer(split)
        return V[:, : split.k] @ V_inv[: split.k, :]

    @property
    def mu_stable(self) -> complex:
        """Sum of the selected eigenvalues of G₊, tr(P_s G₊)."""
        return complex(np.trace(self.stable_split().selected_block))


def profile_direction(system: SystemModel, profile: ProfileGrid) -> str:
    """inflow/outflow of the layer from (H1) at U₊."""
    if system.hyperbolic_only:
        raise RejectedInputError(f"{system.name} has no parabolic block; no eigenvalue ODE")
    h1 = audit_H1(system, Endstate.at(system, profile.endstate))
    direction = layer_direction(h1)
    if direction is None:
        raise CoefficientDegeneracyError("the boundary is characteristic at U₊; no layer direction",
                                         witness=to_jsonable(h1.witness))
    return direction


def boundary_rows(system: SystemModel, profile: ProfileGrid, coefficients: LayerCoefficients,
                  direction: str) -> Array:
    """Γ with orthonormal rows: the full W̃ trace (inflow) or its parabolic part (outflow)."""
    n, r, m = system.n, system.r, system.n_hyp
    if direction == "inflow":
        rows = np.hstack((np.eye(n), np.zeros((n, r))))
    else:
        dW = w_jacobian(system, profile.U[0])[m:]
        rows = np.hstack((dW @ coefficients.at(0.0).P, np.zeros((r, r))))
    return sla.orth(rows.T).T


def build_eigensystem(
    system: SystemModel,
    profile: ProfileGrid,
    fp: FrequencyPoint,
    *,
    coefficients: LayerCoefficients | None = None,
    direction: str | None = None,
    selection: Array | None = None,
) -> FirstOrderSystem:
    """
    The W-system at ``fp``.

    Without ``selection`` the frequency must satisfy consistent splitting:
    no eigenvalue of G₊ on the imaginary axis and exactly as many stable
    eigenvalues as Γ has rows.
    """
    if fp.xi.size != system.d - 1:
        raise RejectedInputError(f"ξ̃ must have {system.d - 1} components, got {fp.xi.size}")
    coefficients = coefficients or LayerCoefficients(system, profile)
    direction = direction or profile_direction(system, profile)
    G_plus = assemble(coefficients.plus, fp.lam, fp.xi, system.n_hyp).G
    Gamma = boundary_rows(system, profile, coefficients, direction)
    w = sla.eigvals(G_plus)
    if selection is None:
        scale = max(1.0, float(np.max(np.abs(w))))
        if np.min(np.abs(np.real(w))) <= HYPERBOLICITY_TOL * scale:
            raise NonHyperbolicFrequencyError(
                f"G₊ has an eigenvalue on the imaginary axis at λ={fp.lam}, ξ̃={fp.xi.tolist()}",
                eigenvalues=to_jsonable(w),
            )
        selection = np.real(w) < 0.0
        if int(selection.sum()) != Gamma.shape[0]:
            raise NonHyperbolicFrequencyError(
                f"consistent splitting violated: {int(selection.sum())} stable modes, "
                f"{Gamma.shape[0]} boundary rows",
                k_stable=int(selection.sum()), rows=Gamma.shape[0], lam=to_jsonable(fp.lam),
            )
    return FirstOrderSystem(system, profile, fp, coefficients, direction, Gamma, G_plus,
                            np.asarray(selection, dtype=bool))


# ─── Evans function ───────────────────────────────────────────

@dataclass(frozen=True)
class EvansResult:
    value: complex
    fp: FrequencyPoint
    transversality: float          # |det(Γ Q(0))|, Q orthonormal
    backend: str
    steps: int
    orthogonality_error: float = 0.0
    normalization: str = NORMALIZATION

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.fp.to_dict(),
            "D": to_jsonable(self.value),
            "abs_D": abs(self.value),
            "transversality": self.transversality,
            "backend": self.backend,
            "steps": self.steps,
            "orthogonality_error": self.orthogonality_error,
            "normalization": self.normalization,
        }


@lru_cache(maxsize=16)
def _stencil(N: int, k: int):
    return compound_stencil(N, k)


def continue_basis(sys: FirstOrderSystem, reference: Array | None) -> Array:
    """P_s(λ) R_ref, or the Schur basis of G₊ when there is no usable reference."""
    basis = sys.stable_split().basis
    if reference is None:
        return basis
    R = sys.stable_projector() @ reference
    s = np.linalg.svd(R, compute_uv=False)
    if s.size and s[-1] < 1e-8 * max(s[0], 1e-300):
        logger.warning("Projected reference basis is rank deficient at λ=%s; restarting", sys.fp.lam)
        return basis
    return R


def _integrate(fun, length: float, y0: Array, rtol: float, atol: float) -> tuple[Array, int]:
    """Integrate y' = fun(x, y) from x = L back to 0."""
    if length == 0.0:
        return y0, 0
    sol = solve_ivp(fun, (length, 0.0), y0, method="DOP853", rtol=rtol, atol=atol)
    if sol.success and np.all(np.isfinite(sol.y[:, -1])):
        return sol.y[:, -1], int(sol.nfev)
    # rescaled retry with an implicit method
    scale = float(np.linalg.norm(y0)) or 1.0
    logger.warning("Explicit integration failed (%s); retrying rescaled with Radau", sol.message)
    retry = solve_ivp(fun, (length, 0.0), y0 / scale, method="Radau", rtol=rtol, atol=atol / scale)
    if not retry.success or not np.all(np.isfinite(retry.y[:, -1])):
        logger.error("Evans integration failed: %s", retry.message)
        raise IntegrationFailure(f"eigenvalue ODE integration failed: {retry.message}",
                                 nfev=int(sol.nfev + retry.nfev))
    return retry.y[:, -1] * scale, int(sol.nfev + retry.nfev)


def _evans_compound(sys: FirstOrderSystem, R: Array, rtol: float, atol: float) -> EvansResult:
    N, k = sys.size, R.shape[1]
    if k == 0:
        return EvansResult(1.0 + 0j, sys.fp, 1.0, "compound", 0)
    stencil = _stencil(N, k)
    mu = sys.mu_stable

    def rhs(x, psi):
        return compound_matrix(sys.G(x), stencil) @ psi - mu * psi

    psi0, steps = _integrate(rhs, sys.length, plucker(R, stencil).astype(complex), rtol, atol)
    D = wedge_pairing(sys.Gamma, psi0, stencil)
    norm = float(np.linalg.norm(psi0))
    return EvansResult(D, sys.fp, abs(D) / norm if norm > 0 else 0.0, "compound", steps)


def _evans_orthogonal(sys: FirstOrderSystem, R: Array, rtol: float, atol: float) -> EvansResult:
    N, k = sys.size, R.shape[1]
    if k == 0:
        return EvansResult(1.0 + 0j, sys.fp, 1.0, "orthogonal", 0)
    Q_L, Y_L = np.linalg.qr(R)
    mu = sys.mu_stable

    def rhs(x, y):
        Q = y[:-1].reshape(N, k)
        GQ = sys.G(x) @ Q
        QGQ = Q.conj().T @ GQ
        return np.concatenate(((GQ - Q @ QGQ).ravel(), [np.trace(QGQ) - mu]))

    y0 = np.concatenate((Q_L.ravel(), [0.0])).astype(complex)
    y, steps = _integrate(rhs, sys.length, y0, rtol, atol)
    Q0, gamma0 = y[:-1].reshape(N, k), y[-1]
    orth_err = float(np.linalg.norm(Q0.conj().T @ Q0 - np.eye(k)))
    Qh, _ = np.linalg.qr(Q0)
    D = np.linalg.det(sys.Gamma @ Q0) * np.exp(gamma0) * np.linalg.det(Y_L)
    trans = abs(np.linalg.det(sys.Gamma @ Qh))
    return EvansResult(complex(D), sys.fp, float(trans), "orthogonal", steps, orth_err)


def _pick_backend(backend: str, size: int) -> str:
    if backend == "auto":
        return "compound" if size <= COMPOUND_MAX_DIM else "orthogonal"
    if backend not in ("compound", "orthogonal"):
        raise RejectedInputError(f"unknown Evans backend '{backend}'")
    return backend


def evans_from_system(sys: FirstOrderSystem, R: Array, *, backend: str = "auto",
                      rtol: float = EVANS_RTOL, atol: float = EVANS_ATOL,
                      injected_zeros: Sequence[complex] = ()) -> EvansResult:
    """D for a built system and an initial basis R at x₁ = L."""
    kind = _pick_backend(backend, sys.size)
    res = (_evans_compound if kind == "compound" else _evans_orthogonal)(sys, R, rtol, atol)
    if injected_zeros:
        factor = complex(np.prod([sys.fp.lam - z for z in injected_zeros]))
        res = EvansResult(res.value * factor, res.fp, res.transversality * abs(factor), res.backend,
                          res.steps, res.orthogonality_error)
    logger.debug("D(%s, %s) = %s [%s, %d evaluations]", sys.fp.xi.tolist(), sys.fp.lam, res.value,
                 res.backend, res.steps)
    return res


def evans(
    system: SystemModel,
    profile: ProfileGrid,
    fp: FrequencyPoint,
    *,
    backend: str = "auto",
    reference: Array | None = None,
    coefficients: LayerCoefficients | None = None,
    rtol: float = EVANS_RTOL,
    atol: float = EVANS_ATOL,
) -> EvansResult:
    """
    Evans function at one frequency.

    The stable basis at x₁ = L is P_s(λ) ``reference`` when a reference
    basis is supplied (analytic in λ) and the Schur basis of G₊ otherwise.
    """
    if fp.rho == 0.0:
        raise RejectedInputError("the Evans function is not evaluated at ρ = 0")
    sys = build_eigensystem(system, profile, fp, coefficients=coefficients)
    return evans_from_system(sys, continue_basis(sys, reference), backend=backend, rtol=rtol, atol=atol)


def cauchy_riemann_residual(
    system: SystemModel,
    profile: ProfileGrid,
    fp: FrequencyPoint,
    h: float = 1e-3,
    *,
    backend: str = "auto",
    coefficients: LayerCoefficients | None = None,
) -> float:
    """|∂_x D + i ∂_y D| relative to the local size of D, by central differences in λ = x + iy."""
    coefficients = coefficients or LayerCoefficients(system, profile)
    center = build_eigensystem(system, profile, fp, coefficients=coefficients)
    R0 = center.stable_split().basis
    D0 = evans_from_system(center, R0, backend=backend).value
    vals = {}
    for key, dl in (("+x", h), ("-x", -h), ("+y", 1j * h), ("-y", -1j * h)):
        sys = build_eigensystem(system, profile, FrequencyPoint(fp.xi, fp.lam + dl),
                                coefficients=coefficients, direction=center.direction)
        vals[key] = evans_from_system(sys, continue_basis(sys, R0), backend=backend).value
    dx = (vals["+x"] - vals["-x"]) / (2.0 * h)
    dy = (vals["+y"] - vals["-y"]) / (2.0 * h)
    scale = max(abs(dx) + abs(dy), abs(D0), 1e-300)
    return float(abs(dx + 1j * dy) / scale)


# ─── Conjugation to constant coefficients ─────────────────────

@dataclass(frozen=True)
class Conjugator:
    """Φ with Φ' = GΦ − ΦG₊ and Φ → I at x₁ = L; W = ΦY turns W' = GW into Y' = G₊Y."""

    x: Array
    Phi: Array                 # (K, N, N)
    bound: float               # max over x₁ of max(‖Φ‖, ‖Φ⁻¹‖)
    deviation: Array           # ‖Φ(x₁) − I‖
    residual: float
    rate: float
    C: float
    iterations: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "bound": self.bound,
            "max_deviation": float(np.max(self.deviation)),
            "residual": self.residual,
            "rate": self.rate,
            "C": self.C,
            "iterations": self.iterations,
        }


def conjugate(sys: FirstOrderSystem, *, max_iter: int = 60, tol: float = 1e-11) -> Conjugator:
    """
    Conjugator on the profile grid by fixed-point iteration in the eigenbasis of G₊.

    Entries Δ_ij of Φ − I with Re(μ_i − μ_j) < −θ/2 are integrated forward
    from x₁ = 0, the others backward from L; each interval uses the
    exponential trapezoid rule with φ₁/φ₂ weights.
    """
    x = sys.profile.x
    N = sys.size
    I = np.eye(N)
    if sys.profile.is_constant:
        Phi = np.broadcast_to(I, (x.size, N, N)).astype(complex)
        return Conjugator(x, Phi, 1.0, np.zeros(x.size), 0.0, float("inf"), 0.0, 0)

    mu, V = np.linalg.eig(sys.G_plus)
    condV = float(np.linalg.cond(V))
    if condV > SEMISIMPLE_CONDITION_MAX:
        raise ConjugationFailure("G₊ is not diagonalizable to working precision", cond=condV)
    V_inv = np.linalg.inv(V)
    Gx = np.array([sys.G(xi) for xi in x])
    Theta = V_inv @ (Gx - sys.G_plus) @ V
    a = mu[:, None] - mu[None, :]
    forward = np.real(a) < -0.5 * sys.profile.theta
    h = np.diff(x)[:, None, None]
    zb = np.where(forward, 0.0, -a * h)
    zf = np.where(forward, a * h, 0.0)
    eb, p1b, p2b = np.exp(zb), phi1(zb), phi2(zb)
    ef, p1f, p2f = np.exp(zf), phi1(zf), phi2(zf)

    K = x.size
    Delta = np.zeros((K, N, N), dtype=complex)
    for it in range(1, max_iter + 1):
        R = Theta @ (I + Delta)
        new = np.zeros_like(Delta)
        for i in range(K - 2, -1, -1):
            dR = R[i + 1] - R[i]
            back = eb[i] * new[i + 1] - h[i] * (p1b[i] * R[i] + (p1b[i] - p2b[i]) * dR)
            new[i] = np.where(forward, 0.0, back)
        for i in range(K - 1):
            dR = R[i + 1] - R[i]
            fwd = ef[i] * new[i] + h[i] * (p1f[i] * R[i + 1] - (p1f[i] - p2f[i]) * dR)
            new[i + 1] = np.where(forward, fwd, new[i + 1])
        change = float(np.max(np.abs(new - Delta)))
        Delta = new
        size = float(np.max(np.abs(Delta)))
        if not np.isfinite(size) or size > CONJUGATOR_BOUND:
            logger.error("Conjugator iteration diverged at step %d (|Δ| = %.3e)", it, size)
            raise ConjugationFailure("conjugator fixed-point iteration diverged", iteration=it, size=size)
        if change <= tol * (1.0 + size):
            break
    else:
        raise ConjugationFailure(f"conjugator did not converge in {max_iter} iterations", change=change)

    Phi = V @ (I + Delta) @ V_inv
    sv = np.linalg.svd(Phi, compute_uv=False)
    bound = float(max(np.max(sv[:, 0]), np.max(1.0 / sv[:, -1])))
    if not np.isfinite(bound) or bound > CONJUGATOR_BOUND:
        raise ConjugationFailure(f"conjugator growth {bound:.3e} exceeds {CONJUGATOR_BOUND:.1e}", bound=bound)

    k = min(3, K - 1)
    dPhi = (make_interp_spline(x, Phi.real.reshape(K, -1), k=k).derivative()(x)
            + 1j * make_interp_spline(x, Phi.imag.reshape(K, -1), k=k).derivative()(x)).reshape(K, N, N)
    defect = dPhi - (Gx @ Phi - Phi @ sys.G_plus)
    gscale = 1.0 + float(np.max(np.linalg.norm(Gx, axis=(1, 2))))
    residual = float(np.max(np.linalg.norm(defect[1:-1], axis=(1, 2)))) / gscale if K > 2 else 0.0

    deviation = np.linalg.norm(Phi - I, ord=2, axis=(1, 2))
    floor = 1e-12
    tail = (x >= 0.25 * x[-1]) & (deviation > floor) & (x < x[-1])
    rate, C = (fit_exponential_rate(x[tail], deviation[tail]) if tail.sum() >= 3
               else (float("inf"), float(np.max(deviation))))
    logger.info("Conjugator: %d iterations, bound %.3g, ‖Φ − I‖∞ %.3e, residual %.2e",
                it, bound, float(deviation.max()), residual)
    return Conjugator(x, Phi, bound, deviation, residual, float(rate), float(C), it)


# ─── Condition (D) ────────────────────────────────────────────

class ContourEvaluator:
    """
    Batch evaluator of D(ξ̃, ·) for one ξ̃ slice.

    Each new λ takes its initial basis by projecting the basis of the
    nearest λ evaluated so far, so refinements inserted between existing
    samples continue the same analytic branch.
    """

    def __init__(self, system: SystemModel, profile: ProfileGrid, xi: Array, *,
                 coefficients: LayerCoefficients, direction: str, backend: str = "auto",
                 rtol: float = EVANS_RTOL, atol: float = EVANS_ATOL,
                 injected_zeros: Sequence[complex] = (), workers: int | None = None) -> None:
        self.system, self.profile, self.xi = system, profile, np.asarray(xi, dtype=float)
        self.coefficients, self.direction = coefficients, direction
        self.backend, self.rtol, self.atol = backend, rtol, atol
        self.injected_zeros = tuple(injected_zeros)
        self.workers = workers
        self.lams: list[complex] = []
        self.bases: list[Array] = []
        self.results: list[EvansResult] = []

    def __call__(self, lams: Array) -> Array:
        jobs = []
        for lam in np.asarray(lams, dtype=complex):
            sys = build_eigensystem(self.system, self.profile, FrequencyPoint(self.xi, complex(lam)),
                                    coefficients=self.coefficients, direction=self.direction)
            if self.lams:
                j = int(np.argmin(np.abs(np.asarray(self.lams) - lam)))
                R = continue_basis(sys, self.bases[j])
            else:
                R = sys.stable_split().basis
            self.lams.append(complex(lam))
            self.bases.append(R)
            jobs.append((sys, R))
        out = parallel_map(
            lambda job: evans_from_system(job[0], job[1], backend=self.backend, rtol=self.rtol,
                                          atol=self.atol, injected_zeros=self.injected_zeros),
            jobs, self.workers,
        )
        self.results.extend(out)
        return np.array([r.value for r in out])


def xi_slices(d: int, xi_max: float, count: int) -> list[Array]:
    """ξ̃ = s e_k for s on a symmetric lattice and each tangential axis e_k."""
    if d == 1:
        return [np.zeros(0)]
    values = np.linspace(-xi_max, xi_max, max(count, 1)) if count > 1 else np.array([0.0])
    out: list[Array] = [np.zeros(d - 1)]
    for k in range(d - 1):
        for s in values:
            if s == 0.0:
                continue
            xi = np.zeros(d - 1)
            xi[k] = s
            out.append(xi)
    return out


@dataclass(frozen=True)
class ConditionDReport:
    check: CheckResult
    slices: list[dict[str, Any]]
    samples: list[EvansResult] = field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        return self.check.verdict

    def rows(self) -> list[tuple[float, ...]]:
        """CSV rows (ξ̃..., Re λ, Im λ, Re D, Im D, |D|)."""
        return [(*r.fp.xi.tolist(), r.fp.lam.real, r.fp.lam.imag, r.value.real, r.value.imag, abs(r.value))
                for r in self.samples]

    def to_dict(self) -> dict[str, Any]:
        return {**self.check.to_dict(), "slices": to_jsonable(self.slices)}


def check_condition_D(
    system: SystemModel,
    profile: ProfileGrid,
    section: EvansSection | None = None,
    *,
    injected_zeros: Sequence[complex] = (),
    winding_tol: float = WINDING_TOL,
    workers: int | None = None,
) -> ConditionDReport:
    """
    Winding numbers of D(ξ̃, ·) around half-disks in Re λ ≥ 0 for a lattice of ξ̃.

    The contour is offset into Re λ > 0 by ``section.re_offset`` and keeps
    ρ ≥ ρ_min by an inner arc around the origin.  The verdict is pass when
    every winding is 0 and the smallest transversality is at least
    ``section.theta_report``; indeterminate when a winding stays unresolved.
    """
    section = section or EvansSection()
    coefficients = LayerCoefficients(system, profile)
    direction = profile_direction(system, profile)
    slices: list[dict[str, Any]] = []
    samples: list[EvansResult] = []
    logger.info("Condition (D) for %s: %d ξ̃ slices, radius %.3g", system.name,
                len(xi_slices(system.d, section.xi_max, section.xi_slices)), section.radius)
    for xi in xi_slices(system.d, section.xi_max, section.xi_slices):
        inner = float(np.sqrt(max(section.rho_min ** 2 - float(xi @ xi), 0.0)))
        path = half_disk_path(section.radius, section.re_offset, inner)
        ev = ContourEvaluator(system, profile, xi, coefficients=coefficients, direction=direction,
                              backend=section.backend, rtol=section.rtol, atol=section.atol,
                              injected_zeros=injected_zeros, workers=workers)
        wr = adaptive_winding(path, ev, section.contour_points, refinements=section.refinements, tol=winding_tol)
        worst = min(ev.results, key=lambda r: r.transversality)
        slices.append({
            "xi": xi.tolist(),
            "winding": wr.winding,
            "rounded": wr.rounded,
            "resolved": wr.resolved,
            "min_abs_D": wr.min_abs,
            "min_transversality": worst.transversality,
            "argmin_lambda": worst.fp.lam,
            "points": int(wr.points.size),
        })
        samples.extend(ev.results)
        logger.debug("ξ̃=%s: winding %.4f, min transversality %.3e", xi.tolist(), wr.winding, worst.transversality)

    min_trans = min(s["min_transversality"] for s in slices)
    measured = {"min_transversality": min_trans, "min_abs_D": min(s["min_abs_D"] for s in slices),
                "slices": len(slices), "theta_report": section.theta_report}
    witness = None
    if not all(s["resolved"] for s in slices):
        verdict = Verdict.INDETERMINATE
        witness = next(s for s in slices if not s["resolved"])
        logger.warning("Condition (D) indeterminate: winding unresolved at ξ̃=%s", witness["xi"])
    elif any(s["rounded"] != 0 for s in slices):
        verdict = Verdict.FAIL
        witness = next(s for s in slices if s["rounded"] != 0)
    elif min_trans < section.theta_report:
        verdict = Verdict.FAIL
        witness = min(slices, key=lambda s: s["min_transversality"])
    else:
        verdict = Verdict.PASS
    logger.info("Condition (D): %s (min transversality %.3e)", verdict.value, min_trans)
    check = CheckResult("D", verdict, measured, witness, note=NORMALIZATION)
    return ConditionDReport(check, slices, samples)


def evans_homotopy(system: SystemModel, profiles: Sequence[ProfileGrid],
                   section: EvansSection | None = None, **kwargs) -> list[dict[str, Any]]:
    """Condition (D) traced along a sequence of profiles of growing amplitude."""
    out = []
    for prof in profiles:
        report = check_condition_D(system, prof, section, **kwargs)
        out.append({
            "amplitude": prof.amplitude,
            "verdict": report.verdict.value,
            "min_transversality": report.check.measured["min_transversality"],
            "windings": [s["rounded"] for s in report.slices],
        })
        logger.info("Amplitude %.3e: condition (D) %s", prof.amplitude, report.verdict.value)
    return out


__all__ = [
    "NORMALIZATION",
    "FrequencyPoint",
    "Coefficients",
    "Blocks",
    "assemble",
    "forcing_vector",
    "recover_state",
    "coefficients_at",
    "LayerCoefficients",
    "FirstOrderSystem",
    "profile_direction",
    "boundary_rows",
    "build_eigensystem",
    "EvansResult",
    "continue_basis",
    "evans_from_system",
    "evans",
    "cauchy_riemann_residual",
    "Conjugator",
    "conjugate",
    "ContourEvaluator",
    "xi_slices",
    "ConditionDReport",
    "check_condition_D",
    "evans_homotopy",
]

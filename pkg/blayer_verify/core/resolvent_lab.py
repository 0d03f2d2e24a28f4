"""
resolvent_lab — Resolvent problems on the low-frequency contour and the bounds they obey.

(L_ξ̃ − λ)U = ∂^β_{x₁} f is solved as the boundary-value problem

    W' = G(x₁) W + φ(x₁),   Γ W(0) = b,   W(L) ∈ E_s(G₊),

by Hermite–Simpson collocation on a stretched grid.  E_s is the decaying
subspace continued from Re λ > 0, so it stays meaningful on the contour
Re λ = −θ₁(k² + |ξ̃|²).  Past L the solution is e^{G₊(x₁−L)} W(L) exactly,
and its norms over [L, ∞) are added in closed form.

The solved fields feed sweep checks: exponent fits of the norm ratios
against ρ, per mode class of the slow block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import make_interp_spline
from scipy.optimize import brentq

from blayer_verify.configs.constants import (
    CONTINUATION_STEPS,
    EPSILON_REPORT,
    GREEN_WIDTH,
    RESOLVENT_CONDITION_MAX,
    RESOLVENT_LENGTH,
    RESOLVENT_STRETCH,
    RHO_MAX_LOW,
    SLOPE_SLACK,
    SOBOLEV_TOL,
    TAIL_NODES,
    THETA1,
)
from blayer_verify.configs.settings import Contour, ResolventSection, RunConfig
from blayer_verify.core.branches import branch_gradient, cluster_derivatives, sorted_eigenvalues
from blayer_verify.core.evans_engine import (
    Blocks,
    Coefficients,
    FirstOrderSystem,
    FrequencyPoint,
    LayerCoefficients,
    assemble,
    build_eigensystem,
    conjugate,
    evans,
    forcing_vector,
    recover_state,
)
from blayer_verify.core.hypothesis_audit import GlancingPoint
from blayer_verify.core.model_core import Endstate, SystemModel, catalog_get, symbol
from blayer_verify.core.profile_solver import ProfileGrid, constant_profile
from blayer_verify.core.symbol_analysis import (
    BlockDecomposition,
    BlockInfo,
    classify_blocks,
    limit_matrix,
    q_coefficient,
    split_HP,
)
from blayer_verify.core.verdicts import CheckResult, Verdict, to_jsonable
from blayer_verify.errors import (
    BlayerVerifyError,
    ConjugationFailure,
    EigenvalueProximityError,
    NonHyperbolicFrequencyError,
    NumericalFailure,
    RejectedInputError,
    SplittingFailure,
)
from blayer_verify.utils.fitting import envelope_constant, fit_exponential_rate, loglog_fit, spearman
from blayer_verify.utils.linalg import (
    continued_mask,
    left_annihilator,
    match_eigenvalues,
    ordered_schur,
    spectral_projector,
    stable_mask,
)
from blayer_verify.utils.parallel import parallel_map
from blayer_verify.utils.quadrature import (
    l1_norm,
    l2_norm,
    linf_norm,
    lp_interpolated,
    pointwise_norm,
    stretched_grid,
)

logger = logging.getLogger(__name__)

Array = np.ndarray

MODE_CLASSES = ("P", "H_e", "H_h", "H_g", "H_t", "H_u")
_KIND_CLASS = {
    "elliptic+": "H_e",
    "elliptic-": "H_e",
    "hyperbolic+": "H_h",
    "hyperbolic-": "H_h",
    "glancing": "H_g",
    "totally-nonglancing+": "H_t",
    "totally-nonglancing-": "H_t",
    "unclassified": "H_u",
}
INTERPOLATED_P = (4.0, 8.0)


# ─── Contour ──────────────────────────────────────────────────

def contour_lambda(xi: Any, k: float, theta1: float = THETA1) -> complex:
    """λ(ξ̃, k) = ik − θ₁(k² + |ξ̃|²)."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return complex(-theta1 * (k * k + float(xi @ xi)), k)


def contour_point(xi: Any, k: float, theta1: float = THETA1) -> FrequencyPoint:
    return FrequencyPoint.make(xi, contour_lambda(xi, k, theta1))


def contour_sweep(d: int, section: ResolventSection | None = None,
                  contour: Contour | None = None) -> list[FrequencyPoint]:
    """
    Contour points along the ray (k, |ξ̃|) ∝ ``section.direction`` with ρ
    log-spaced on [ρ_floor, ρ_max]; ξ̃ points along the first tangential axis.
    """
    section = section or ResolventSection()
    contour = contour or Contour()
    if d == 1:
        dk, dxi = 1.0, 0.0
    else:
        v = np.asarray(section.direction, dtype=float)
        dk, dxi = v / np.linalg.norm(v)
    e = np.zeros(d - 1)
    if d > 1:
        e[0] = 1.0

    def at(t: float) -> FrequencyPoint:
        return contour_point(t * dxi * e, t * dk, contour.theta1)

    points = []
    for rho in np.geomspace(section.rho_floor, section.rho_max, section.sweep_points):
        # ρ(t) ≥ t, so the root lies in [0, ρ]
        t = brentq(lambda s: at(s).rho - rho, 0.0, rho, xtol=1e-15 * rho)
        fp = at(t)
        if abs(fp.tau) > contour.k_max:
            logger.warning("Contour point k = %.3g exceeds k_max = %.3g", fp.tau, contour.k_max)
        points.append(fp)
    return points


def continued_selection(coefficients: Coefficients, fp: FrequencyPoint, m: int,
                        steps: int = CONTINUATION_STEPS) -> Array:
    """
    Eigenvalues of G(λ, ξ̃) continuing the stable set of G(λ + s, ξ̃), s > 0.

    The path is the horizontal segment from Re λ + s > 0 down to λ.
    """
    if fp.rho == 0.0:
        raise RejectedInputError("the decaying subspace is not continued to ρ = 0")
    shift = 2.0 * abs(fp.gamma) + fp.rho
    path = [assemble(coefficients, fp.lam + shift * t, fp.xi, m).G for t in np.linspace(1.0, 0.0, steps + 1)]
    return continued_mask(path, stable_mask)


def contour_eigensystem(system: SystemModel, profile: ProfileGrid, fp: FrequencyPoint, *,
                        coefficients: LayerCoefficients | None = None,
                        direction: str | None = None) -> FirstOrderSystem:
    coefficients = coefficients or LayerCoefficients(system, profile)
    selection = continued_selection(coefficients.plus, fp, system.n_hyp)
    sys = build_eigensystem(system, profile, fp, coefficients=coefficients, direction=direction,
                            selection=selection)
    if sys.k_stable != sys.Gamma.shape[0]:
        raise NonHyperbolicFrequencyError(
            f"{sys.k_stable} continued decaying modes against {sys.Gamma.shape[0]} boundary rows",
            lam=to_jsonable(fp.lam), xi=fp.xi.tolist(),
        )
    return sys


# ─── Forcing family ───────────────────────────────────────────

@dataclass(frozen=True)
class Forcing:
    """f(x₁) = s(x₁)·v with its derivative; both map a grid to shape (len(x), n)."""

    name: str
    value: Callable[[Array], Array]
    derivative: Callable[[Array], Array]

    def __add__(self, other: "Forcing") -> "Forcing":
        return Forcing(f"{self.name}+{other.name}",
                       lambda x: self.value(x) + other.value(x),
                       lambda x: self.derivative(x) + other.derivative(x))

    def __rmul__(self, c: complex) -> "Forcing":
        return Forcing(f"{c}*{self.name}", lambda x: c * self.value(x), lambda x: c * self.derivative(x))

    @classmethod
    def from_samples(cls, name: str, x: Array, values: Array) -> "Forcing":
        """Cubic spline through grid samples; zero past the last node."""
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=complex)
        k = min(3, x.size - 1)
        re = make_interp_spline(x, values.real, k=k)
        im = make_interp_spline(x, values.imag, k=k)
        dre, dim = re.derivative(), im.derivative()

        def inside(s: Array) -> Array:
            return (np.asarray(s) >= x[0]) & (np.asarray(s) <= x[-1])

        def value(s):
            s = np.asarray(s, dtype=float)
            return np.where(inside(s)[:, None], re(s) + 1j * im(s), 0.0)

        def derivative(s):
            s = np.asarray(s, dtype=float)
            return np.where(inside(s)[:, None], dre(s) + 1j * dim(s), 0.0)

        return cls(name, value, derivative)


def _bump(center: float, width: float) -> tuple[Callable[[Array], Array], Callable[[Array], Array]]:
    def shape(x):
        u = (np.asarray(x, dtype=float) - center) / width
        inside = np.abs(u) < 1.0
        safe = np.where(inside, u, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)

    def slope(x):
        u = (np.asarray(x, dtype=float) - center) / width
        inside = np.abs(u) < 1.0
        safe = np.where(inside, u, 0.0)
        return np.where(inside, shape(x) * (-2.0 * safe / (1.0 - safe * safe) ** 2) / width, 0.0)

    return shape, slope


def _gaussian(center: float, width: float) -> tuple[Callable[[Array], Array], Callable[[Array], Array]]:
    norm = 1.0 / (width * np.sqrt(np.pi))

    def shape(x):
        u = (np.asarray(x, dtype=float) - center) / width
        return norm * np.exp(-u * u)

    def slope(x):
        u = (np.asarray(x, dtype=float) - center) / width
        return -2.0 * u / width * norm * np.exp(-u * u)

    return shape, slope


def make_forcing(name: str, n: int, vector: Any = None, *, center: float | None = None,
                 width: float | None = None) -> Forcing:
    """
    Named member of the test family.

    exp-<a>         e^{−a x₁}
    bump            smooth compact bump on [2, 4]
    boundary-bump   smooth compact bump on [0, 1]
    gaussian        unit-mass Gaussian (center 2, width 0.5 unless given)
    zero            f ≡ 0
    """
    v = np.ones(n) / np.sqrt(n) if vector is None else np.asarray(vector, dtype=complex)
    if v.shape != (n,):
        raise RejectedInputError(f"forcing vector must have {n} components")
    if name.startswith("exp-"):
        try:
            a = float(name[4:])
        except ValueError as e:
            raise RejectedInputError(f"bad exponential forcing '{name}'") from e
        if a <= 0:
            raise RejectedInputError("exponential forcing needs a positive rate")

        def shape(x):
            return np.exp(-a * np.asarray(x, dtype=float))

        def slope(x):
            return -a * np.exp(-a * np.asarray(x, dtype=float))
    elif name == "bump":
        shape, slope = _bump(3.0 if center is None else center, 1.0 if width is None else width)
    elif name == "boundary-bump":
        shape, slope = _bump(0.5 if center is None else center, 0.5 if width is None else width)
    elif name == "gaussian":
        shape, slope = _gaussian(2.0 if center is None else center, 0.5 if width is None else width)
    elif name == "zero":
        def shape(x):
            return np.zeros(np.shape(x))

        slope = shape
    else:
        raise RejectedInputError(f"unknown forcing '{name}'")
    return Forcing(name, lambda x: np.outer(shape(x), v), lambda x: np.outer(slope(x), v))


# ─── Grids and tails ──────────────────────────────────────────

def resolvent_grid(profile: ProfileGrid, length: float | None = None, nodes: int = 2000) -> Array:
    """Profile nodes (or a stretched grid for a constant layer), extended geometrically to ``length``."""
    length = max(profile.length, RESOLVENT_LENGTH) if length is None else float(length)
    if profile.is_constant:
        return stretched_grid(length, nodes, RESOLVENT_STRETCH)
    x = profile.x
    if length <= x[-1]:
        return x.copy()
    h = float(x[-1] - x[-2])
    ext = []
    pos = float(x[-1])
    while pos < length:
        h *= 1.05
        pos += h
        ext.append(pos)
    return np.concatenate((x, ext))


def whole_line_grid(x: Array) -> Array:
    """The half-line grid mirrored to [−L, L]; index len(x) − 1 is x₁ = 0."""
    return np.concatenate((-x[:0:-1], x))


@dataclass(frozen=True)
class DecayingTail:
    """y(s) = e^{Ts} y₀ on a selected invariant subspace spanned by the columns of R, s ≥ 0."""

    T: Array
    R: Array
    y0: Array
    rate: float

    @classmethod
    def build(cls, A: Array, selection: Array, start: Array) -> "DecayingTail":
        split = ordered_schur(A, selection)
        T = split.selected_block
        w = np.diag(T)
        if w.size and np.max(np.real(w)) >= 0.0:
            raise NonHyperbolicFrequencyError(
                "a continued decaying mode does not decay; the contour is too far left (reduce θ₁)",
                eigenvalues=to_jsonable(w),
            )
        rate = float(np.min(-np.real(w))) if w.size else float("inf")
        return cls(T, split.basis, split.basis.conj().T @ start, rate)

    @cached_property
    def _rule(self) -> tuple[Array, Array, Array]:
        # s = −log(1 − t)/rate maps the slowest mode onto a linear function of t
        t, w = leggauss(TAIL_NODES)
        t = 0.5 * (t + 1.0)
        w = 0.5 * w
        s = -np.log1p(-t) / self.rate
        weights = w / (self.rate * (1.0 - t))
        states = np.array([sla.expm(self.T * si) @ self.y0 for si in s])
        return s, weights, states

    def states(self, s: Array) -> Array:
        """R y(s) at the offsets ``s``, shape (len(s), N)."""
        s = np.asarray(s, dtype=float)
        if self.y0.size == 0:
            return np.zeros((s.size, self.R.shape[0]), dtype=complex)
        w, V = np.linalg.eig(self.T)
        if np.linalg.cond(V) > 1e8:
            return np.array([self.R @ (sla.expm(self.T * si) @ self.y0) for si in s])
        c = np.linalg.solve(V, self.y0)
        return (np.exp(np.outer(s, w)) * c) @ (self.R @ V).T

    def norms(self, C: Array) -> tuple[float, float, float]:
        """(L¹, L², L^∞) of s ↦ C R y(s) on [0, ∞)."""
        if self.y0.size == 0 or not np.any(self.y0):
            return 0.0, 0.0, 0.0
        CR = C @ self.R
        _, weights, states = self._rule
        vals = np.linalg.norm(states @ CR.T, axis=1)
        X = sla.solve_continuous_lyapunov(self.T.conj().T, -(CR.conj().T @ CR))
        l2 = float(np.sqrt(max(float(np.real(self.y0.conj() @ X @ self.y0)), 0.0)))
        linf = max(float(np.linalg.norm(CR @ self.y0)), float(np.max(vals)))
        return float(weights @ vals), l2, linf


def _norms(x: Array, values: Array, *tails: tuple[float, float, float]) -> dict[str, float]:
    l1, l2, linf = l1_norm(x, values), l2_norm(x, values), linf_norm(values)
    for t1, t2, tinf in tails:
        l1 += t1
        l2 = float(np.hypot(l2, t2))
        linf = max(linf, tinf)
    return {"L1": l1, "L2": l2, "Linf": linf}


def _aligned_mask(A: Array, reference: Array, mask: Array) -> Array:
    """``mask`` over ``reference`` transferred to the order of ``scipy.linalg.eigvals(A)``."""
    perm = match_eigenvalues(reference, sla.eigvals(A))
    out = np.zeros(mask.size, dtype=bool)
    out[perm] = mask
    return out


# ─── Collocation ──────────────────────────────────────────────

@dataclass(frozen=True)
class Collocation:
    W: Array          # (K+1, N) node values
    mid: Array        # (K, N) Hermite midpoint values
    cond: float       # 1-norm condition estimate of the collocation matrix
    residual: float   # relative algebraic residual


def _blocks_on(coefficients: LayerCoefficients, lam: complex, xi: Array, m: int, x: Array) -> list[Blocks]:
    # past the profile (and for constant layers) every node shares one Coefficients object
    seen: dict[int, Blocks] = {}
    out = []
    for s in x:
        c = coefficients.at(float(s))
        b = seen.get(id(c))
        if b is None:
            b = assemble(c, lam, xi, m)
            if c is coefficients.plus or c is coefficients.left:
                seen[id(c)] = b
        out.append(b)
    return out


def _phi_triples(bn: list[Blocks], bm: list[Blocks], g_left: Array, g_mid: Array, g_right: Array,
                 m: int) -> Array:
    K = len(bm)
    N = bn[0].G.shape[0]
    phi = np.zeros((K, 3, N), dtype=complex)
    if not (np.any(g_left) or np.any(g_mid) or np.any(g_right)):
        return phi
    for i in range(K):
        phi[i, 0] = forcing_vector(bn[i], g_left[i], m)
        phi[i, 1] = forcing_vector(bm[i], g_mid[i], m)
        phi[i, 2] = forcing_vector(bn[i + 1], g_right[i], m)
    return phi


def collocate(x: Array, G_nodes: Array, G_mid: Array, phi: Array, left_rows: Array, left_data: Array,
              right_rows: Array, condition_max: float = RESOLVENT_CONDITION_MAX) -> Collocation:
    """
    Hermite–Simpson collocation of W' = GW + φ with separated boundary rows.

    ``phi[i]`` holds φ at the left end, midpoint and right end of interval i,
    so forcings with a kink at a node are integrated exactly per side.
    """
    K = x.size - 1
    N = G_nodes.shape[1]
    p, q = left_rows.shape[0], right_rows.shape[0]
    if p + q != N:
        raise NonHyperbolicFrequencyError(f"{p} + {q} boundary rows for a system of size {N}")
    I = np.eye(N)
    h = np.diff(x)[:, None, None]
    hv = h[:, :, 0]
    Gi, Gj = G_nodes[:-1], G_nodes[1:]
    Ai = 0.5 * I + h / 8.0 * Gi
    Bi = 0.5 * I - h / 8.0 * Gj
    ci = hv / 8.0 * (phi[:, 0] - phi[:, 2])
    left = -I - h / 6.0 * (Gi + 4.0 * G_mid @ Ai)
    right = I - h / 6.0 * (4.0 * G_mid @ Bi + Gj)
    rhs = hv / 6.0 * (phi[:, 0] + 4.0 * phi[:, 1] + phi[:, 2] + 4.0 * np.einsum("kij,kj->ki", G_mid, ci))

    a = np.arange(N)
    blk = np.arange(K)[:, None, None]
    rows = np.broadcast_to(p + blk * N + a[None, :, None], (K, N, N))
    cols = np.broadcast_to(blk * N + a[None, None, :], (K, N, N))
    top_r, top_c = np.meshgrid(np.arange(p), a, indexing="ij")
    bot_r, bot_c = np.meshgrid(p + K * N + np.arange(q), K * N + a, indexing="ij")
    data = np.concatenate((left_rows.ravel(), left.ravel(), right.ravel(), right_rows.ravel()))
    rr = np.concatenate((top_r.ravel(), rows.ravel(), rows.ravel(), bot_r.ravel()))
    cc = np.concatenate((top_c.ravel(), cols.ravel(), cols.ravel() + N, bot_c.ravel()))
    size = (K + 1) * N
    A = sp.csc_matrix((data.astype(complex), (rr, cc)), shape=(size, size))
    b = np.concatenate((np.asarray(left_data, dtype=complex), rhs.ravel(), np.zeros(q, dtype=complex)))

    try:
        lu = spla.splu(A)
    except RuntimeError as e:
        logger.error("Collocation matrix is singular: %s", e)
        raise EigenvalueProximityError("resolvent collocation matrix is singular", cond=float("inf")) from e
    w = lu.solve(b)
    inverse = spla.LinearOperator(
        (size, size),
        matvec=lambda v: lu.solve(np.asarray(v, dtype=complex)),
        rmatvec=lambda v: lu.solve(np.asarray(v, dtype=complex), trans="H"),
        dtype=complex,
    )
    cond = float(spla.norm(A, 1) * spla.onenormest(inverse))
    if not np.isfinite(cond) or cond > condition_max:
        logger.error("Collocation condition estimate %.3e exceeds %.1e", cond, condition_max)
        raise EigenvalueProximityError(
            f"resolvent problem is ill-conditioned (cond ≈ {cond:.3e}); λ is close to the spectrum",
            cond=cond,
        )
    bnorm = float(np.linalg.norm(b))
    resid = float(np.linalg.norm(A @ w - b))
    residual = resid / bnorm if bnorm > 0 else resid
    W = w.reshape(K + 1, N)
    mid = (np.einsum("kij,kj->ki", Ai, W[:-1]) + np.einsum("kij,kj->ki", Bi, W[1:]) + ci)
    return Collocation(W, mid, cond, residual)


def _solve_half_line(sys: FirstOrderSystem, x: Array, g_left: Array, g_mid: Array, g_right: Array,
                     boundary_data: Array | None, condition_max: float
                     ) -> tuple[Collocation, list[Blocks], list[Blocks]]:
    lam, xi, m = sys.fp.lam, sys.fp.xi, sys.system.n_hyp
    if x[0] != 0.0 or x[-1] < sys.profile.length:
        raise RejectedInputError("the resolvent grid must start at 0 and cover the profile")
    xm = 0.5 * (x[:-1] + x[1:])
    bn = _blocks_on(sys.coefficients, lam, xi, m, x)
    bm = _blocks_on(sys.coefficients, lam, xi, m, xm)
    phi = _phi_triples(bn, bm, g_left, g_mid, g_right, m)
    right = left_annihilator(sys.stable_split().basis)
    b = np.zeros(sys.Gamma.shape[0]) if boundary_data is None else np.asarray(boundary_data)
    col = collocate(x, np.array([bl.G for bl in bn]), np.array([bl.G for bl in bm]), phi,
                    sys.Gamma, b, right, condition_max)
    return col, bn, bm


def _recover_all(blocks: list[Blocks], W: Array, m: int, g: Array) -> tuple[Array, Array]:
    pairs = [recover_state(b, w, m, gi) for b, w, gi in zip(blocks, W, g)]
    return np.array([u for u, _ in pairs]), np.array([up for _, up in pairs])


def _output_maps(b: Blocks, m: int) -> tuple[Array, Array]:
    """C_U, C_U' with U = C_U W and U' = C_U' W for the unforced system."""
    n = b.P.shape[0]
    r = n - m
    C_U = np.hstack((b.P, np.zeros((n, r))))
    C_Up = np.hstack((b.P @ b.N @ b.P, b.P[:, m:]))
    return C_U, C_Up


# ─── Mode classes ─────────────────────────────────────────────

@dataclass(frozen=True)
class ModeSplit:
    """Projectors on Z = V⁻¹W for each mode class; they sum to the identity."""

    decomposition: BlockDecomposition
    blocks: tuple[BlockInfo, ...]
    projectors: dict[str, Array]


def mode_split(system: SystemModel, endstate: Endstate, fp: FrequencyPoint) -> ModeSplit:
    dec = split_HP(system, endstate, fp)
    blocks = classify_blocks(system, endstate, fp, decomposition=dec)
    n, N = system.n, system.n + system.r
    G, _ = limit_matrix(system, endstate, fp)
    T11 = (dec.V_inv @ G @ dec.V)[:n, :n]
    w_hat = np.linalg.eigvals(dec.H / fp.rho)
    perm = match_eigenvalues(w_hat * fp.rho, sla.eigvals(T11))
    projectors: dict[str, Array] = {}
    for b in blocks:
        mask = np.zeros(n, dtype=bool)
        mask[perm[list(b.members)]] = True
        full = np.zeros((N, N), dtype=complex)
        full[:n, :n] = spectral_projector(T11, mask)
        cls = _KIND_CLASS[b.kind]
        projectors[cls] = projectors.get(cls, 0) + full
    fast = np.zeros((N, N), dtype=complex)
    fast[n:, n:] = np.eye(N - n)
    projectors["P"] = fast
    return ModeSplit(dec, tuple(blocks), projectors)


def _conjugator_on(x: Array, sys: FirstOrderSystem) -> Array | None:
    """Φ at the grid nodes (identity past the profile); None for a constant layer."""
    if sys.profile.is_constant:
        return None
    conj = conjugate(sys)
    N = sys.size
    out = np.broadcast_to(np.eye(N, dtype=complex), (x.size, N, N)).copy()
    inside = x <= conj.x[-1]
    k = min(3, conj.x.size - 1)
    flat = conj.Phi.reshape(conj.x.size, -1)
    re = make_interp_spline(conj.x, flat.real, k=k)(x[inside])
    im = make_interp_spline(conj.x, flat.imag, k=k)(x[inside])
    out[inside] = (re + 1j * im).reshape(-1, N, N)
    return out


# ─── Resolvent fields ─────────────────────────────────────────

@dataclass(frozen=True)
class ResolventField:
    """One solved problem (L_ξ̃ − λ)U = ∂^β f with its norms (tails included)."""

    fp: FrequencyPoint
    beta: int
    forcing: str
    x: Array
    U: Array
    Up: Array
    W: Array
    f: Array                                  # samples of f itself, also for β = 1
    norms: dict[str, Any]
    cond: float
    residual: float
    Z: Array | None = None                    # (u_H, u_P) = V⁻¹Φ⁻¹W
    fZ: Array | None = None                   # (f_H, f_P)
    modes: dict[str, Array] = field(default_factory=dict)
    pairing: dict[str, float] = field(default_factory=dict)
    blocks: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()
    tail: DecayingTail | None = None
    tail_map: Array | None = None             # C_U: U = C_U W past the last node

    @property
    def rho(self) -> float:
        return self.fp.rho

    @property
    def trace(self) -> Array:
        return self.U[0]

    def extend(self, s: Array) -> Array:
        """U at x₁ = x[-1] + s (s ≥ 0) from the exact decaying tail."""
        if self.tail is None or self.tail_map is None:
            raise RejectedInputError("this field carries no tail")
        return self.tail.states(s) @ self.tail_map.T

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({
            **self.fp.to_dict(),
            "beta": self.beta,
            "forcing": self.forcing,
            "cond": self.cond,
            "residual": self.residual,
            "norms": self.norms,
            "pairing": self.pairing,
            "blocks": list(self.blocks),
            "notes": list(self.notes),
        })

    def row(self) -> dict[str, Any]:
        out = {
            "rho": self.rho,
            "k": self.fp.tau,
            "xi_norm": self.fp.xi_norm,
            "gamma": self.fp.gamma,
            "forcing": self.forcing,
            "beta": self.beta,
            "U_L2": self.norms["U"]["L2"],
            "U_Linf": self.norms["U"]["Linf"],
            "Z_L2": self.norms.get("Z", {}).get("L2", float("nan")),
            "Z_Linf": self.norms.get("Z", {}).get("Linf", float("nan")),
            "cond": self.cond,
        }
        for cls in MODE_CLASSES:
            out[f"{cls}_Linf"] = self.norms.get("modes", {}).get(cls, {}).get("Linf", float("nan"))
        return out


def solve_resolvent(
    system: SystemModel,
    profile: ProfileGrid,
    fp: FrequencyPoint,
    forcing: Forcing,
    beta: int = 0,
    *,
    grid: Array | None = None,
    coefficients: LayerCoefficients | None = None,
    direction: str | None = None,
    endstate: Endstate | None = None,
    modes: bool = True,
    boundary_data: Array | None = None,
    condition_max: float = RESOLVENT_CONDITION_MAX,
) -> ResolventField:
    """
    Solve (L_ξ̃ − λ)U = ∂^β_{x₁} f on the half-line.

    β = 1 is solved with the forcing f' directly.  With ``modes`` and
    ρ ≤ ρ_max,low the solution is also split into mode classes; a failing
    split leaves a note instead of raising.
    """
    if beta not in (0, 1):
        raise RejectedInputError(f"β must be 0 or 1, got {beta}")
    coefficients = coefficients or LayerCoefficients(system, profile)
    sys = contour_eigensystem(system, profile, fp, coefficients=coefficients, direction=direction)
    x = resolvent_grid(profile) if grid is None else np.asarray(grid, dtype=float)
    xm = 0.5 * (x[:-1] + x[1:])
    g = forcing.derivative if beta else forcing.value
    gn, gm = g(x), g(xm)
    m, n = system.n_hyp, system.n

    col, bn, _ = _solve_half_line(sys, x, gn[:-1], gm, gn[1:], boundary_data, condition_max)
    U, Up = _recover_all(bn, col.W, m, gn)
    tail = DecayingTail.build(sys.G_plus, sys.selection, col.W[-1])
    C_U, C_Up = _output_maps(assemble(coefficients.plus, fp.lam, fp.xi, m), m)
    fv = forcing.value(x)
    norms: dict[str, Any] = {
        "U": _norms(x, U, tail.norms(C_U)),
        "Up": _norms(x, Up, tail.norms(C_Up)),
        "f": _norms(x, fv),
        "g": _norms(x, gn),
    }

    Z = fZ = None
    mode_arrays: dict[str, Array] = {}
    pairing: dict[str, float] = {}
    kinds: tuple[str, ...] = ()
    notes: list[str] = []
    if modes and not 0.0 < fp.rho <= RHO_MAX_LOW:
        notes.append(f"mode split needs 0 < ρ ≤ {RHO_MAX_LOW}")
    elif modes:
        try:
            endstate = endstate or Endstate.at(system, profile.endstate)
            split = mode_split(system, endstate, fp)
            Phi = _conjugator_on(x, sys)
            phi = np.array([forcing_vector(b, gi, m) for b, gi in zip(bn, gn)])
            if Phi is None:
                Y, fY = col.W, phi
            else:
                Y = np.linalg.solve(Phi, col.W[..., None])[..., 0]
                fY = np.linalg.solve(Phi, phi[..., None])[..., 0]
            V_inv = split.decomposition.V_inv
            Z, fZ = Y @ V_inv.T, fY @ V_inv.T
            norms["Z"] = _norms(x, Z, tail.norms(V_inv))
            norms["u_H"] = _norms(x, Z[:, :n], tail.norms(V_inv[:n]))
            norms["u_P"] = _norms(x, Z[:, n:], tail.norms(V_inv[n:]))
            norms["f_H"] = _norms(x, fZ[:, :n])
            norms["f_P"] = _norms(x, fZ[:, n:])
            norms["modes"] = {}
            for cls, Pi in split.projectors.items():
                u = Z @ Pi.T
                mode_arrays[cls] = u
                norms["modes"][cls] = {**_norms(x, u, tail.norms(Pi @ V_inv)), "trace": float(np.linalg.norm(u[0]))}
            pairing = {
                "H": float(trapezoid(pointwise_norm(fZ[:, :n]) * pointwise_norm(Z[:, :n]), x)),
                "P": float(trapezoid(pointwise_norm(fZ[:, n:]) * pointwise_norm(Z[:, n:]), x)),
            }
            kinds = tuple(b.kind for b in split.blocks)
        except (SplittingFailure, ConjugationFailure, RejectedInputError) as e:
            logger.warning("Mode projection unavailable at ρ=%.3g: %s", fp.rho, e)
            notes.append(f"mode projection unavailable: {e}")

    logger.debug("Resolvent at ρ=%.3g (%s, β=%d): |U|∞ %.3e, cond %.2e, residual %.1e",
                 fp.rho, forcing.name, beta, norms["U"]["Linf"], col.cond, col.residual)
    return ResolventField(fp, beta, forcing.name, x, U, Up, col.W, fv, norms, col.cond, col.residual,
                          Z, fZ, mode_arrays, pairing, kinds, tuple(notes), tail, C_U)


# ─── Bound checks on sweeps ───────────────────────────────────

def _groups(fields: Sequence[ResolventField]) -> dict[str, list[ResolventField]]:
    out: dict[str, list[ResolventField]] = {}
    for f in fields:
        out.setdefault(f"{f.forcing}|beta={f.beta}", []).append(f)
    return {k: sorted(v, key=lambda f: f.rho) for k, v in sorted(out.items())}


def _exponent_check(fields: Sequence[ResolventField], quantity: Callable[[ResolventField], float | None],
                    floor: float, slack: float) -> tuple[Verdict, dict[str, Any]]:
    """Fit log quantity against log ρ per forcing; pass when every slope ≥ floor − slack."""
    fits: dict[str, Any] = {}
    verdicts: list[Verdict] = []
    for name, group in _groups(fields).items():
        pairs = [(f.rho, quantity(f)) for f in group]
        pairs = [(r, q) for r, q in pairs if q is not None and np.isfinite(q) and q > 0]
        if len(pairs) < 2:
            continue
        rho, values = np.array(pairs).T
        fit = loglog_fit(rho, values)
        fits[name] = {**fit.to_dict(), "floor": floor, "surplus": fit.slope - floor,
                      "max": float(np.max(values))}
        if not np.isfinite(fit.slope) or fit.unreliable:
            verdicts.append(Verdict.INDETERMINATE)
        elif fit.slope >= floor - slack:
            verdicts.append(Verdict.PASS)
        else:
            verdicts.append(Verdict.FAIL)
    if not verdicts:
        return Verdict.INDETERMINATE, fits
    return Verdict.combine(verdicts), fits


def maximal_estimate_ratio(f: ResolventField) -> float | None:
    """
    [(γ + ρ²)|u_H|²₂ + |u_P|²₂ + |u_H(0)|² + |u_P(0)|²] / [⟨|f_H|,|u_H|⟩ + ⟨|f_P|,|u_P|⟩].

    0 when both sides vanish; None without a mode split.
    """
    if f.Z is None:
        return None
    n = f.U.shape[1]
    lhs = ((f.fp.gamma + f.rho ** 2) * f.norms["u_H"]["L2"] ** 2 + f.norms["u_P"]["L2"] ** 2
           + float(np.linalg.norm(f.Z[0, :n])) ** 2 + float(np.linalg.norm(f.Z[0, n:])) ** 2)
    rhs = f.pairing["H"] + f.pairing["P"]
    if rhs == 0.0:
        return 0.0 if lhs == 0.0 else float("inf")
    return lhs / rhs


def verify_maximal_estimate(fields: Sequence[ResolventField], *, slack: float = SLOPE_SLACK) -> CheckResult:
    """The maximal-estimate ratio stays bounded as ρ → 0 (log-slope ≥ −slack)."""
    verdict, fits = _exponent_check(fields, maximal_estimate_ratio, 0.0, slack)
    ratios = [r for r in map(maximal_estimate_ratio, fields) if r is not None]
    measured = {"fits": fits, "max_ratio": max(ratios, default=float("nan")), "fields": len(ratios)}
    logger.info("Maximal estimate: %s (max ratio %.3g)", verdict.value, measured["max_ratio"])
    return CheckResult("maximal-estimate", verdict, measured)


def _ratio(num: str, sub: str, den: Callable[[ResolventField], float]) -> Callable[[ResolventField], float | None]:
    def q(f: ResolventField) -> float | None:
        if num not in f.norms:
            return None
        d = den(f)
        return f.norms[num][sub] / d if d > 0 else None

    return q


def _f1(f: ResolventField) -> float:
    return f.norms["f"]["L1"]


def _f1_plus_inf(f: ResolventField) -> float:
    return f.norms["f"]["L1"] + f.norms["f"]["Linf"]


def verify_basic_bounds(fields: Sequence[ResolventField], *, slack: float = SLOPE_SLACK) -> CheckResult:
    """|Z|_∞/|f|₁ ≳ ρ^{−1} and |Z|₂/|f|₁ ≳ ρ^{−3/2} at worst."""
    v_inf, fit_inf = _exponent_check(fields, _ratio("Z", "Linf", _f1), -1.0, slack)
    v_two, fit_two = _exponent_check(fields, _ratio("Z", "L2", _f1), -1.5, slack)
    verdict = Verdict.combine([v_inf, v_two])
    logger.info("Basic resolvent bounds: %s", verdict.value)
    return CheckResult("basic-bounds", verdict, {"Z_Linf": fit_inf, "Z_L2": fit_two})


def sobolev_ratio(f: ResolventField) -> float:
    """|U|²_∞ / (2|U|₂|U'|₂), at most 1 on the half-line."""
    den = 2.0 * f.norms["U"]["L2"] * f.norms["Up"]["L2"]
    num = f.norms["U"]["Linf"] ** 2
    return num / den if den > 0 else (0.0 if num == 0 else float("inf"))


def verify_refined_bounds(fields: Sequence[ResolventField], *, epsilon: float = EPSILON_REPORT,
                          slack: float = SLOPE_SLACK) -> CheckResult:
    """
    Per-class L^∞ exponents against |f|₁ + |f|_∞, the ρ^{−1+ε} bound on |Z|_∞,
    the derivative bound, boundary traces and the Sobolev step.
    """
    with_modes = [f for f in fields if f.Z is not None]
    measured: dict[str, Any] = {"epsilon": epsilon, "fields": len(fields), "with_modes": len(with_modes)}
    verdicts: list[Verdict] = []
    present = sorted({c for f in with_modes for c in f.modes})
    classes: dict[str, Any] = {}
    for cls in present:
        if cls in ("H_g", "H_u"):
            continue

        def q(f: ResolventField, cls=cls) -> float | None:
            if cls not in f.norms.get("modes", {}):
                return None
            return f.norms["modes"][cls]["Linf"] / _f1_plus_inf(f)

        v, fits = _exponent_check(with_modes, q, 0.0, slack)
        classes[cls] = {"verdict": v.value, "fits": fits}
        verdicts.append(v)
    measured["classes"] = classes
    measured["glancing_present"] = "H_g" in present

    v_z, fit_z = _exponent_check(with_modes, _ratio("Z", "Linf", _f1_plus_inf), -1.0 + epsilon, slack)
    v_z2, fit_z2 = _exponent_check(with_modes, _ratio("Z", "L2", _f1_plus_inf), -1.5 + epsilon, slack)
    verdicts += [v_z, v_z2]
    measured["Z_Linf"], measured["Z_L2"] = fit_z, fit_z2
    slopes = [v["slope"] for v in fit_z.values() if np.isfinite(v["slope"])]
    measured["epsilon_measured"] = min(slopes) + 1.0 if slopes else float("nan")

    def deriv(f: ResolventField) -> float | None:
        d = f.norms["f"]["L1"] ** 2 + f.norms["f"]["Linf"] ** 2
        return f.norms["Up"]["L2"] ** 2 / d if d > 0 else None

    v_d, fit_d = _exponent_check(fields, deriv, -1.0 + epsilon, slack)
    verdicts.append(v_d)
    measured["derivative_L2"] = fit_d

    traces = []
    for f in with_modes:
        for cls, nm in f.norms["modes"].items():
            den = f.norms["f"]["L1"] * nm["Linf"]
            if den > 0:
                traces.append(nm["trace"] ** 2 / den)
    measured["trace_constant"] = max(traces, default=0.0)

    sob = [sobolev_ratio(f) for f in fields]
    measured["sobolev_max"] = max(sob, default=0.0)
    verdicts.append(Verdict.PASS if all(s <= 1.0 + SOBOLEV_TOL for s in sob) else Verdict.FAIL)

    verdict = Verdict.combine(verdicts) if with_modes else Verdict.INDETERMINATE
    if not with_modes:
        measured["note"] = "no field carried a mode split; partial report"
    logger.info("Refined resolvent bounds: %s (measured ε %.3g)", verdict.value, measured["epsilon_measured"])
    return CheckResult("refined-bounds", verdict, measured)


# ─── Branch data and the diagonalization weight ───────────────

@dataclass(frozen=True)
class BranchData:
    """Glancing frequencies η_j(ξ̃) with their orders s_j."""

    eta: tuple[float, ...] = ()
    s: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if len(self.eta) != len(self.s):
            raise RejectedInputError("branch data needs one order per frequency")
        if any(s < 2 for s in self.s):
            raise RejectedInputError("branch orders must be ≥ 2")

    def to_dict(self) -> dict[str, Any]:
        return {"eta": list(self.eta), "s": list(self.s)}


def gamma2(rho: float, im_lam: float, branch: BranchData) -> float:
    """γ₂ = 1 + Σ_j [ρ⁻¹|Im λ − η_j| + ρ]^{1/s_j − 1}."""
    total = 1.0
    for eta, s in zip(branch.eta, branch.s):
        total += (abs(im_lam - eta) / rho + rho) ** (1.0 / s - 1.0)
    return float(total)


def _branch_order(system: SystemModel, endstate: Endstate, xi: Array, k: int, value: float) -> int | None:
    point = GlancingPoint(xi, (k,), value, branch_gradient(endstate.dF, xi, [k]))
    try:
        return max(2, q_coefficient(system, endstate, point).order)
    except RejectedInputError as e:
        logger.warning("No glancing order at ξ=%s: %s", xi.tolist(), e)
        return None


def extract_branch_data(system: SystemModel, endstate: Endstate, xi_tilde: Any,
                        points: Sequence[GlancingPoint] | None = None, *, span: float = 20.0,
                        samples: int = 801) -> BranchData:
    """
    {η_j(ξ̃), s_j}: τ = −λ_k at the glancing points whose tangential part is ξ̃.

    Audit witnesses are rescaled when one matches the direction of ξ̃;
    otherwise ∂_{ξ₁}λ_k(·, ξ̂) is root-found on [−span, span] for every slot k.
    """
    xi_tilde = np.atleast_1d(np.asarray(xi_tilde, dtype=float))
    norm = float(np.linalg.norm(xi_tilde))
    if system.d == 1 or norm == 0.0:
        return BranchData()
    e = xi_tilde / norm
    jacs = endstate.dF
    found: list[tuple[float, int]] = []

    for p in points or ():
        tangential = p.xi[1:]
        tn = float(np.linalg.norm(tangential))
        if tn > 0 and np.allclose(tangential / tn, e, atol=1e-6):
            xi = p.xi * (norm / tn)
            order = _branch_order(system, endstate, xi, p.branch[0], p.value * norm / tn)
            if order is not None:
                found.append((-p.value * norm / tn, order))
    if not found:
        for k in range(system.n):
            def slope(t: float, k=k) -> float:
                xi = np.concatenate(([t], e))
                return float(np.real(cluster_derivatives(jacs, xi, [k], axis=0))[0])

            ts = np.linspace(-span, span, samples)
            vals = np.array([slope(t) for t in ts])
            roots: list[float] = []
            for i in range(samples - 1):
                if vals[i] == 0.0:
                    roots.append(float(ts[i]))
                elif vals[i] * vals[i + 1] < 0:
                    roots.append(brentq(slope, ts[i], ts[i + 1], xtol=1e-14))
            for t in roots:
                xi = np.concatenate(([t], e)) * norm
                value = float(np.real(sorted_eigenvalues(symbol(jacs, xi))[k]))
                order = _branch_order(system, endstate, xi, k, value)
                if order is not None:
                    found.append((-value, order))
    found.sort()
    unique: list[tuple[float, int]] = []
    for eta, s in found:
        if not unique or abs(eta - unique[-1][0]) > 1e-8 * max(1.0, abs(eta)):
            unique.append((eta, s))
    logger.debug("Branch data at ξ̃=%s: %s", xi_tilde.tolist(), unique)
    return BranchData(tuple(u[0] for u in unique), tuple(u[1] for u in unique))


# ─── L^p bounds ───────────────────────────────────────────────

def _lp(norms: dict[str, float], p: float) -> float:
    if p == 2.0:
        return norms["L2"]
    return lp_interpolated(norms["L2"], norms["Linf"], p)


def verify_lp_bounds(fields: Sequence[ResolventField], p_values: Sequence[float] = (2.0, float("inf")),
                     mode: str = "H4prime", *, branches: Callable[[FrequencyPoint], BranchData] | None = None,
                     slack: float = SLOPE_SLACK) -> CheckResult:
    """
    |U|_p against ρ^β|f|₁ + |f|_∞ (slope ≥ −1 − 1/p), or in ``H4`` mode
    against γ₂ρ^{−2/p}(ρ^β|f|₁ + β|f|_∞) (ratio bounded).

    p = 4 and 8 are reported from the L² and L^∞ data, never re-solved.
    """
    if mode not in ("H4prime", "H4"):
        raise RejectedInputError(f"unknown L^p mode '{mode}'")
    if mode == "H4" and branches is None:
        raise RejectedInputError("H4 mode needs branch data")
    weights: dict[int, float] = {}
    if mode == "H4":
        weights = {id(f): gamma2(f.rho, f.fp.tau, branches(f.fp)) for f in fields}

    def quantity(p: float) -> Callable[[ResolventField], float | None]:
        def q(f: ResolventField) -> float | None:
            fn = f.norms["f"]
            if mode == "H4prime":
                den = f.rho ** f.beta * fn["L1"] + fn["Linf"]
            else:
                inv_p = 0.0 if np.isinf(p) else 1.0 / p
                den = weights[id(f)] * f.rho ** (-2.0 * inv_p) * (f.rho ** f.beta * fn["L1"] + f.beta * fn["Linf"])
            return _lp(f.norms["U"], p) / den if den > 0 else None

        return q

    def floor(p: float) -> float:
        inv_p = 0.0 if np.isinf(p) else 1.0 / p
        return -1.0 - inv_p if mode == "H4prime" else 0.0

    measured: dict[str, Any] = {"mode": mode, "p": {}, "interpolated": {}}
    verdicts = []
    for p in p_values:
        v, fits = _exponent_check(fields, quantity(p), floor(p), slack)
        measured["p"][str(p)] = {"verdict": v.value, "fits": fits}
        verdicts.append(v)
    for p in INTERPOLATED_P:
        _, fits = _exponent_check(fields, quantity(p), floor(p), slack)
        measured["interpolated"][str(p)] = fits
    if mode == "H4":
        weights_list = [weights[id(f)] for f in fields]
        measured["gamma2_max"] = max(weights_list, default=1.0)
        ratios = []
        for f in fields:
            nm = f.norms.get("modes", {}).get("H_t")
            den = weights[id(f)] / f.rho * f.norms["f"]["L1"]
            if nm is not None and den > 0:
                ratios.append(max(_lp(nm, p) for p in p_values) / den)
        measured["totally_nonglancing_ratio"] = max(ratios, default=float("nan"))
    verdict = Verdict.combine(verdicts)
    logger.info("L^p resolvent bounds (%s): %s", mode, verdict.value)
    return CheckResult("lp-bounds", verdict, measured)


# ─── Whole-line split ─────────────────────────────────────────

def _tangential_terms(c: Coefficients, xi: Array) -> tuple[Array, Array, Array, Array]:
    """A_ξ, E, C, K of the x̃-Fourier terms at one x₁."""
    n = c.M.shape[0]
    r = c.B.shape[2]
    d = c.A.shape[0]
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
    return Axi, E, C, K


@dataclass(frozen=True)
class WholeLine:
    """(L₀ − λ)V = g on a grid of R with decay at both ends."""

    x: Array
    W: Array
    V: Array
    Vp: Array
    V_mid: Array
    Vp_mid: Array
    norms: dict[str, dict[str, float]]
    cond: float


def solve_whole_line(system: SystemModel, coefficients: LayerCoefficients, lam: complex, x: Array,
                     g_left: Array, g_mid: Array, g_right: Array,
                     condition_max: float = RESOLVENT_CONDITION_MAX) -> WholeLine:
    """
    The x₁-only operator with coefficients frozen at Ū(0) for x₁ < 0.

    ``g_left[i]``/``g_right[i]`` are the forcing at the two ends of
    interval i, which lets a forcing jump at a node.
    """
    m, N = system.n_hyp, system.n + system.r
    xi0 = np.zeros(system.d - 1)
    fp0 = FrequencyPoint(xi0, complex(lam))
    xm = 0.5 * (x[:-1] + x[1:])
    bn = _blocks_on(coefficients, lam, xi0, m, x)
    bm = _blocks_on(coefficients, lam, xi0, m, xm)
    b_left = assemble(coefficients.left, lam, xi0, m)
    b_right = assemble(coefficients.plus, lam, xi0, m)
    keep_right = continued_selection(coefficients.plus, fp0, m)
    keep_left = ~continued_selection(coefficients.left, fp0, m)
    rows_left = left_annihilator(ordered_schur(b_left.G, keep_left).basis)
    rows_right = left_annihilator(ordered_schur(b_right.G, keep_right).basis)
    phi = _phi_triples(bn, bm, g_left, g_mid, g_right, m)
    col = collocate(x, np.array([b.G for b in bn]), np.array([b.G for b in bm]), phi,
                    rows_left, np.zeros(rows_left.shape[0]), rows_right, condition_max)
    g_nodes = np.concatenate((g_left, g_right[-1:]))
    V, Vp = _recover_all(bn, col.W, m, g_nodes)
    V_mid, Vp_mid = _recover_all(bm, col.mid, m, g_mid)

    right = DecayingTail.build(b_right.G, keep_right, col.W[-1])
    w_left = sla.eigvals(b_left.G)
    left = DecayingTail.build(-b_left.G, _aligned_mask(-b_left.G, -w_left, keep_left), col.W[0])
    CU_r, CUp_r = _output_maps(b_right, m)
    CU_l, CUp_l = _output_maps(b_left, m)
    norms = {
        "V": _norms(x, V, right.norms(CU_r), left.norms(CU_l)),
        "Vp": _norms(x, Vp, right.norms(CUp_r), left.norms(CUp_l)),
    }
    return WholeLine(x, col.W, V, Vp, V_mid, Vp_mid, norms, col.cond)


@dataclass(frozen=True)
class WholeLineSplit:
    """U = V + U₁ for a β = 1 forcing, with V from the whole line."""

    fp: FrequencyPoint
    forcing: str
    x: Array
    V: Array
    Vp: Array
    U1: Array
    U: Array
    consistency: float
    norms: dict[str, dict[str, float]]
    triangle: dict[str, bool]

    @property
    def rho(self) -> float:
        return self.fp.rho

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({**self.fp.to_dict(), "forcing": self.forcing, "consistency": self.consistency,
                            "norms": self.norms, "triangle": self.triangle})


def kk_split(
    system: SystemModel,
    profile: ProfileGrid,
    fp: FrequencyPoint,
    forcing: Forcing,
    *,
    grid: Array | None = None,
    coefficients: LayerCoefficients | None = None,
    direction: str | None = None,
    condition_max: float = RESOLVENT_CONDITION_MAX,
) -> WholeLineSplit:
    """
    Split the β = 1 solution as V + U₁.

    V solves (L₀ − λ)V = ∂_{x₁}f̄ on R with f̄ the even extension of f;
    U₁ solves (L_ξ̃ − λ)U₁ = −ℓ(V, V') on the half-line with boundary data
    −ΓW_V(0), where ℓ collects the x̃-Fourier terms:
    ℓ_I = −A_ξ,I V and ℓ_II = E'V + (E + C)V' − KV − A_ξ,II V.
    """
    coefficients = coefficients or LayerCoefficients(system, profile)
    sys = contour_eigensystem(system, profile, fp, coefficients=coefficients, direction=direction)
    m = system.n_hyp
    x = resolvent_grid(profile) if grid is None else np.asarray(grid, dtype=float)
    K = x.size - 1
    xw = whole_line_grid(x)
    xwm = 0.5 * (xw[:-1] + xw[1:])

    def even_slope(s: Array, side: float) -> Array:
        sign = np.sign(s)
        sign = np.where(sign == 0.0, side, sign)
        return sign[:, None] * forcing.derivative(np.abs(s))

    whole = solve_whole_line(system, coefficients, fp.lam, xw, even_slope(xw[:-1], 1.0),
                             even_slope(xwm, 1.0), even_slope(xw[1:], -1.0), condition_max)
    V, Vp = whole.V[K:], whole.Vp[K:]
    V_mid, Vp_mid = whole.V_mid[K:], whole.Vp_mid[K:]

    xm = 0.5 * (x[:-1] + x[1:])
    terms_n = [_tangential_terms(coefficients.at(float(s)), fp.xi) for s in x]
    terms_m = [_tangential_terms(coefficients.at(float(s)), fp.xi) for s in xm]
    E_nodes = np.array([t[1] for t in terms_n])
    if profile.is_constant or not np.any(E_nodes):
        dE_n = np.zeros_like(E_nodes)
        dE_m = np.zeros((xm.size,) + E_nodes.shape[1:], dtype=complex)
    else:
        flat = E_nodes.reshape(x.size, -1)
        k = min(3, x.size - 1)
        dre = make_interp_spline(x, flat.real, k=k).derivative()
        dim = make_interp_spline(x, flat.imag, k=k).derivative()
        dE_n = (dre(x) + 1j * dim(x)).reshape(E_nodes.shape)
        dE_m = (dre(xm) + 1j * dim(xm)).reshape((xm.size,) + E_nodes.shape[1:])

    def coupling(terms, dE, Vs, Vps) -> Array:
        out = []
        for (Axi, E, C, Kmat), dEi, v, vp in zip(terms, dE, Vs, Vps):
            top = -(Axi[:m] @ v)
            bottom = dEi @ v + (E + C) @ vp - Kmat @ v - Axi[m:] @ v
            out.append(np.concatenate((top, bottom)))
        return np.array(out)

    h_nodes = -coupling(terms_n, dE_n, V, Vp)
    h_mid = -coupling(terms_m, dE_m, V_mid, Vp_mid)
    c0 = coefficients.at(0.0)
    Axi0, E0, _, _ = terms_n[0]
    W0 = np.concatenate((c0.M @ V[0], c0.B[0, 0] @ Vp[0] + E0 @ V[0] - c0.A[0][m:] @ V[0]))
    col, bn, _ = _solve_half_line(sys, x, h_nodes[:-1], h_mid, h_nodes[1:], -sys.Gamma @ W0, condition_max)
    U1, _ = _recover_all(bn, col.W, m, h_nodes)

    direct = solve_resolvent(system, profile, fp, forcing, beta=1, grid=x, coefficients=coefficients,
                             direction=sys.direction, modes=False, condition_max=condition_max)
    U = direct.U
    defect = U - (V + U1)
    scale = l2_norm(x, U)
    consistency = l2_norm(x, defect) / scale if scale > 0 else l2_norm(x, defect)

    triangle = {}
    for key, norm in (("L2", lambda u: l2_norm(x, u)), ("Linf", linf_norm)):
        triangle[key] = bool(norm(U) <= norm(V) + norm(U1) + norm(defect) + 1e-14)
    norms = {
        "V": whole.norms["V"],
        "Vp": whole.norms["Vp"],
        "U1": _norms(x, U1),
        "U": direct.norms["U"],
        "f": direct.norms["f"],
    }
    logger.debug("Whole-line split at ρ=%.3g: consistency %.2e", fp.rho, consistency)
    return WholeLineSplit(fp, forcing.name, x, V, Vp, U1, U, float(consistency), norms, triangle)


def verify_whole_line_bounds(splits: Sequence[WholeLineSplit], *, slack: float = SLOPE_SLACK) -> CheckResult:
    """(|V|_p + |V'|_p)/(ρ|f|₁ + |f|_∞) against ρ^{−1/p} for p = 2, ∞."""
    splits = sorted(splits, key=lambda s: s.rho)
    measured: dict[str, Any] = {
        "consistency_max": max((s.consistency for s in splits), default=float("nan")),
        "triangle": all(all(s.triangle.values()) for s in splits),
    }
    verdicts = []
    for key, floor in (("Linf", 0.0), ("L2", -0.5)):
        rho, q = [], []
        for s in splits:
            den = s.rho * s.norms["f"]["L1"] + s.norms["f"]["Linf"]
            val = s.norms["V"][key] + s.norms["Vp"][key]
            if den > 0 and val > 0:
                rho.append(s.rho)
                q.append(val / den)
        if len(rho) < 2:
            verdicts.append(Verdict.INDETERMINATE)
            continue
        fit = loglog_fit(rho, q)
        measured[key] = {**fit.to_dict(), "floor": floor}
        verdicts.append(Verdict.PASS if fit.slope >= floor - slack else Verdict.FAIL)
    if not measured["triangle"]:
        verdicts.append(Verdict.FAIL)
    verdict = Verdict.combine(verdicts)
    logger.info("Whole-line split bounds: %s (consistency %.2e)", verdict.value, measured["consistency_max"])
    return CheckResult("whole-line-split", verdict, measured)


# ─── Green kernel of the x₁-only operator ─────────────────────

def scalar_kernel_derivative(a: float, nu: float, lam: complex, x: Array, y: float) -> Array:
    """∂_y G for νu'' − au' − λu = δ_y on R: μ_∓ e^{μ_∓(x−y)}/(ν(μ₊ − μ₋)) for x ≷ y."""
    disc = np.sqrt(complex(a * a + 4.0 * nu * lam))
    mu_p, mu_m = (a + disc) / (2.0 * nu), (a - disc) / (2.0 * nu)
    if mu_m.real > mu_p.real:
        mu_p, mu_m = mu_m, mu_p
    s = np.asarray(x, dtype=float) - y
    mu = np.where(s > 0, mu_m, mu_p)
    return mu * np.exp(mu * s) / (nu * (mu_p - mu_m))


def _green_grid(length: float, h: float, inner: float = 4.0, growth: float = 1.03) -> Array:
    core = np.arange(0.0, inner + 0.5 * h, h)
    steps = h * growth ** np.arange(1, 4000)
    outer = core[-1] + np.cumsum(steps)
    outer = outer[: int(np.searchsorted(outer, length)) + 1]
    return whole_line_grid(np.concatenate((core, outer)))


def green_kernel_1d_check(system: SystemModel, endstate: Endstate | None = None,
                          rhos: Sequence[float] = (0.02, 0.01, 0.005), ys: Sequence[float] = (0.0, 0.5, 1.0),
                          *, width: float = GREEN_WIDTH) -> CheckResult:
    """
    ∂_yG⁰_λ from delta-approximating forcings, at λ = ρ.

    u solving (L₀ − λ)u = ∂_x δ_w(· − y) equals −∂_yG(·, y) up to the
    smoothing; the far-field decay rate must be at least 0.95ρ and the
    envelope e^{−ρ|x−y|}(ρ + e^{−θ|y|}) holds with a fitted C.
    """
    if system.n > 2 or system.hyperbolic_only:
        raise RejectedInputError("the kernel check needs a scalar or 2×2 viscous model")
    endstate = endstate or Endstate.at(system, np.asarray(system.default_endstate, dtype=float))
    profile = constant_profile(system, endstate)
    coefficients = LayerCoefficients(system, profile)
    v = np.ones(system.n) / np.sqrt(system.n)
    scalar = system.n == 1
    rows, verdicts = [], []
    for rho in rhos:
        x = _green_grid(6.0 / rho + 10.0, width / 5.0)
        xm = 0.5 * (x[:-1] + x[1:])
        for y in ys:
            _, slope = _gaussian(y, width)

            def g(s, slope=slope):
                return np.outer(slope(s), v)

            whole = solve_whole_line(system, coefficients, complex(rho), x, g(x[:-1]), g(xm), g(x[1:]))
            kernel = -whole.V
            size = pointwise_norm(kernel)
            s = x - y
            lo = max(20.0, 4.0 * np.log(1.0 / rho))
            far = (s >= lo) & (s <= 3.0 / rho)
            rate, _ = fit_exponential_rate(s[far], size[far])
            behind = (-s >= 0.5) & (-s <= 8.0)
            theta, _ = fit_exponential_rate(-s[behind], size[behind])
            window = (np.abs(s) >= 5.0 * width) & (np.abs(s) <= 3.0 / rho)
            env = np.exp(-rho * np.abs(s[window])) * (rho + np.exp(-theta * abs(y)))
            C = envelope_constant(env, size[window])
            row = {"rho": rho, "y": y, "decay_rate": rate, "theta": theta, "C": C}
            if scalar:
                exact = scalar_kernel_derivative(float(endstate.dF[0][0, 0]), float(endstate.B[0, 0][0, 0]),
                                                 complex(rho), x[window], y)
                approx = kernel[window, 0] / v[0]
                row["oracle_error"] = float(np.max(np.abs(approx - exact)) / np.max(np.abs(exact)))
            rows.append(row)
            ok = np.isfinite(rate) and rate >= 0.95 * rho and np.isfinite(C)
            verdicts.append(Verdict.PASS if ok else Verdict.FAIL)
    verdict = Verdict.combine(verdicts)
    witness = next((r for r, v_ in zip(rows, verdicts) if v_ is Verdict.FAIL), None)
    logger.info("Whole-line kernel check on %s: %s", system.name, verdict.value)
    return CheckResult("green-kernel-1d", verdict, {"samples": rows}, witness)


# ─── Constant-coefficient block estimate ──────────────────────

def block_energy_estimate(Q: Array, F: Callable[[Array], Array], *, S: Array | None = None,
                          U0: Array | None = None, z_max: float = 40.0, points: int = 4001) -> CheckResult:
    """
    |U|²_∞ + θ|U|²₂ against |F|²₁ for ∂_z U = QU + F, U(+∞) = 0.

    Q with spectrum in Re > 0 pairs with S > 0 (no boundary term); Q with
    spectrum in Re < 0 pairs with S < 0 and adds |U(0)|².  θ is the least
    eigenvalue of Re SQ.  Without ``S``, S solves QᴴS + SQ = 2I.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    k = Q.shape[0]
    w = np.linalg.eigvals(Q)
    if np.all(w.real > 0):
        sign = 1
    elif np.all(w.real < 0):
        sign = -1
    else:
        return CheckResult("block-energy-estimate", Verdict.NOT_APPLICABLE,
                           {"note": "spectrum of Q meets both half-planes", "eigenvalues": w})
    source = "supplied"
    if S is None:
        S = sla.solve_continuous_lyapunov(Q.conj().T, 2.0 * np.eye(k))
        source = "lyapunov"
    S = 0.5 * (np.asarray(S, dtype=complex) + np.asarray(S, dtype=complex).conj().T)
    s_eigs = np.linalg.eigvalsh(S)
    ReSQ = 0.5 * (S @ Q + (S @ Q).conj().T)
    theta = float(np.min(np.linalg.eigvalsh(ReSQ)))
    definite = np.all(s_eigs > 0) if sign > 0 else np.all(s_eigs < 0)
    if not definite or theta <= 0:
        return CheckResult("block-energy-estimate", Verdict.NOT_APPLICABLE,
                           {"note": "no S with the required sign and Re SQ > 0", "theta": theta,
                            "S_eigenvalues": s_eigs, "source": source})

    z = np.linspace(0.0, z_max, points)

    def rhs(t, u):
        return Q @ u + np.asarray(F(np.array([t])), dtype=complex)[0]

    if sign > 0:
        sol = solve_ivp(rhs, (z_max, 0.0), np.zeros(k, dtype=complex), t_eval=z[::-1],
                        method="DOP853", rtol=1e-11, atol=1e-13)
        U = sol.y.T[::-1]
    else:
        start = np.zeros(k, dtype=complex) if U0 is None else np.asarray(U0, dtype=complex)
        sol = solve_ivp(rhs, (0.0, z_max), start, t_eval=z, method="DOP853", rtol=1e-11, atol=1e-13)
        U = sol.y.T
    if not sol.success:
        raise NumericalFailure(f"block ODE integration failed: {sol.message}")
    Fz = np.asarray(F(z), dtype=complex)
    linf, l2, f1 = linf_norm(U), l2_norm(z, U), l1_norm(z, Fz)
    lhs = linf ** 2 + theta * l2 ** 2
    rhs_val = f1 ** 2 + (float(np.linalg.norm(U[0])) ** 2 if sign < 0 else 0.0)
    ratio = lhs / rhs_val if rhs_val > 0 else (0.0 if lhs == 0 else float("inf"))
    measured = {"sign": "positive" if sign > 0 else "negative", "theta": theta, "source": source,
                "lhs": lhs, "rhs": rhs_val, "ratio": ratio, "S_norm": float(np.max(np.abs(s_eigs)))}
    verdict = Verdict.PASS if np.isfinite(ratio) else Verdict.FAIL
    return CheckResult("block-energy-estimate", verdict, measured)


# ─── Evans consistency ────────────────────────────────────────

def evans_consistency(system: SystemModel, profile: ProfileGrid, fps: Sequence[FrequencyPoint], *,
                      forcing: Forcing | None = None, coefficients: LayerCoefficients | None = None,
                      grid: Array | None = None) -> CheckResult:
    """Rank correlation of the collocation condition number with |D| (expected ≤ −0.8)."""
    coefficients = coefficients or LayerCoefficients(system, profile)
    forcing = forcing or make_forcing("exp-1", system.n)
    conds, dets = [], []
    for fp in fps:
        try:
            cond = solve_resolvent(system, profile, fp, forcing, grid=grid, coefficients=coefficients,
                                   modes=False, condition_max=np.inf).cond
        except EigenvalueProximityError as e:
            cond = float(e.diagnostics.get("cond", np.inf))
        conds.append(cond)
        dets.append(abs(evans(system, profile, fp, coefficients=coefficients).value))
    conds_a, dets_a = np.array(conds), np.array(dets)
    measured = {"cond": conds, "abs_D": dets}
    finite = np.isfinite(conds_a) & (dets_a > 0)
    if finite.sum() < 3 or np.max(dets_a[finite]) < 10.0 * np.min(dets_a[finite]):
        measured["note"] = "|D| does not approach the spectrum on these points"
        return CheckResult("evans-consistency", Verdict.NOT_APPLICABLE, measured)
    rank = spearman(np.log(conds_a[finite]), np.log(dets_a[finite]))
    measured["spearman"] = rank
    if not np.isfinite(rank):
        verdict = Verdict.INDETERMINATE
    else:
        verdict = Verdict.PASS if rank <= -0.8 else Verdict.FAIL
    logger.info("Evans consistency: %s (rank correlation %.3f)", verdict.value, rank)
    return CheckResult("evans-consistency", verdict, measured)


# ─── Module run ───────────────────────────────────────────────

@dataclass(frozen=True)
class ResolventReport:
    checks: dict[str, CheckResult]
    fields: tuple[ResolventField, ...]
    splits: tuple[WholeLineSplit, ...] = ()
    failures: tuple[dict[str, Any], ...] = ()

    @property
    def verdict(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks.values())

    def rows(self) -> list[dict[str, Any]]:
        return [f.row() for f in self.fields]

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "fields": [f.to_dict() for f in self.fields],
            "whole_line": [s.to_dict() for s in self.splits],
            "failures": to_jsonable(list(self.failures)),
        }


def _model_for_kernel(system: SystemModel) -> tuple[SystemModel, Endstate | None]:
    if system.n <= 2 and not system.hyperbolic_only:
        return system, None
    return catalog_get("transport-parabolic", {"d": 1})


def run_resolvent_lab(system: SystemModel, endstate: Endstate, profile: ProfileGrid,
                      config: RunConfig | None = None, *, workers: int | None = None) -> ResolventReport:
    """Contour sweep, every bound check, the whole-line split and the calibration oracles."""
    config = config or RunConfig()
    section = config.resolvent
    fps = contour_sweep(system.d, section, config.contour)
    coefficients = LayerCoefficients(system, profile)
    x = resolvent_grid(profile, section.length, section.nodes)
    forcings = [make_forcing(name, system.n) for name in section.forcings]
    tasks = [(fp, f, 0) for f in forcings for fp in fps] + [(fp, forcings[0], 1) for fp in fps]

    def solve(task):
        fp, f, beta = task
        try:
            return solve_resolvent(system, profile, fp, f, beta, grid=x, coefficients=coefficients,
                                   endstate=endstate)
        except NumericalFailure as e:
            logger.warning("Resolvent solve failed at ρ=%.3g (%s): %s", fp.rho, f.name, e)
            return {"rho": fp.rho, "forcing": f.name, "beta": beta, "error": str(e), **e.diagnostics}

    results = parallel_map(solve, tasks, workers)
    fields = [r for r in results if isinstance(r, ResolventField)]
    failures = [r for r in results if isinstance(r, dict)]
    beta0 = [f for f in fields if f.beta == 0]

    checks: dict[str, CheckResult] = {}
    checks["maximal-estimate"] = verify_maximal_estimate(beta0, slack=config.tolerances.slope_slack)
    checks["basic-bounds"] = verify_basic_bounds(beta0, slack=config.tolerances.slope_slack)
    checks["refined-bounds"] = verify_refined_bounds(beta0, epsilon=section.epsilon_report,
                                                     slack=config.tolerances.slope_slack)
    branches = None
    if section.mode == "H4":
        def branches(fp: FrequencyPoint) -> BranchData:
            return extract_branch_data(system, endstate, fp.xi)
    checks["lp-bounds"] = verify_lp_bounds(fields, section.p_values, section.mode, branches=branches,
                                           slack=config.tolerances.slope_slack)

    def split(fp):
        try:
            return kk_split(system, profile, fp, forcings[0], grid=x, coefficients=coefficients)
        except BlayerVerifyError as e:
            logger.warning("Whole-line split failed at ρ=%.3g: %s", fp.rho, e)
            return None

    splits = [s for s in parallel_map(split, fps, workers) if s is not None]
    checks["whole-line-split"] = verify_whole_line_bounds(splits, slack=config.tolerances.slope_slack)

    model, model_end = _model_for_kernel(system)
    checks["green-kernel-1d"] = green_kernel_1d_check(model, model_end)

    mid = fps[len(fps) // 2]
    try:
        split_mid = mode_split(system, endstate, mid)
        estimates = []
        Hhat = split_mid.decomposition.H / mid.rho
        size = Hhat.shape[0]
        for b in split_mid.blocks:
            idx = list(b.members)
            Qk = ordered_schur(Hhat, np.isin(np.arange(size), idx)).selected_block
            estimates.append(block_energy_estimate(
                Qk, lambda z, k=len(idx): np.outer(np.exp(-np.asarray(z)), np.ones(k)) / np.sqrt(k)))
        checks["block-energy-estimate"] = CheckResult(
            "block-energy-estimate", Verdict.combine(e.verdict for e in estimates),
            {"rho": mid.rho, "blocks": [{"kind": b.kind, **e.measured} for b, e in zip(split_mid.blocks, estimates)]},
        )
    except (SplittingFailure, RejectedInputError) as e:
        checks["block-energy-estimate"] = CheckResult("block-energy-estimate", Verdict.INDETERMINATE,
                                                      {"note": str(e)})

    shifted = [FrequencyPoint(fp.xi, complex(abs(fp.gamma) + fp.rho, fp.tau)) for fp in fps]
    try:
        checks["evans-consistency"] = evans_consistency(system, profile, shifted, forcing=forcings[0],
                                                        coefficients=coefficients, grid=x)
    except NumericalFailure as e:
        checks["evans-consistency"] = CheckResult("evans-consistency", Verdict.INDETERMINATE, {"note": str(e)})

    report = ResolventReport(checks, tuple(fields), tuple(splits), tuple(failures))
    logger.info("Resolvent lab on %s: %s (%d fields, %d failures)", system.name, report.verdict.value,
                len(fields), len(failures))
    return report


__all__ = [
    "MODE_CLASSES",
    "contour_lambda",
    "contour_point",
    "contour_sweep",
    "continued_selection",
    "contour_eigensystem",
    "Forcing",
    "make_forcing",
    "resolvent_grid",
    "whole_line_grid",
    "DecayingTail",
    "Collocation",
    "collocate",
    "ModeSplit",
    "mode_split",
    "ResolventField",
    "solve_resolvent",
    "maximal_estimate_ratio",
    "verify_maximal_estimate",
    "verify_basic_bounds",
    "sobolev_ratio",
    "verify_refined_bounds",
    "BranchData",
    "gamma2",
    "extract_branch_data",
    "verify_lp_bounds",
    "WholeLine",
    "solve_whole_line",
    "WholeLineSplit",
    "kk_split",
    "verify_whole_line_bounds",
    "scalar_kernel_derivative",
    "green_kernel_1d_check",
    "block_energy_estimate",
    "evans_consistency",
    "ResolventReport",
    "run_resolvent_lab",
]

"""
symbol_analysis — Low-frequency structure of the limiting symbol G₊(λ, ξ̃).

Near ρ = 0 the spectrum of G₊ separates into n slow eigenvalues, O(ρ),
and r fast ones with real parts bounded away from zero.  The slow block,
written in U-coordinates, is H = H₀ + O(ρ²) with

    H₀(λ, ξ̃) = −(A¹₊)⁻¹ (λ A⁰₊ + Σ_{j≥2} iξ_j A^j₊).

The rescaled block Ĥ = H/ρ splits into elliptic, hyperbolic, glancing
and totally nonglancing blocks.  Glancing blocks open into a ν-th root
fan of radius (qσ)^{1/ν} at distance σ from the glancing frequency.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Any, Sequence

import numpy as np
import scipy.linalg as sla

from blayer_verify.configs.constants import (
    DIAGONALIZER_RESIDUAL,
    GLANCING_FAN_TOL,
    GRADIENT_TOL,
    JORDAN_RANK_TOL,
    RHO_MAX_LOW,
    SIGN_TEST_STEP,
    SLOPE_SLACK,
    SPECTRAL_GAP_MIN,
)
from blayer_verify.configs.settings import SymbolSection
from blayer_verify.core.branches import normal_derivative_sign, sorted_eigenvalues
from blayer_verify.core.evans_engine import FrequencyPoint, assemble, coefficients_at
from blayer_verify.core.hypothesis_audit import GlancingPoint, find_glancing_points
from blayer_verify.core.model_core import Endstate, SystemModel, symbol
from blayer_verify.core.verdicts import CheckResult, Verdict, to_jsonable
from blayer_verify.errors import RejectedInputError, SplittingFailure
from blayer_verify.utils.fitting import FitResult, loglog_fit
from blayer_verify.utils.linalg import (
    block_diagonalizer,
    cluster_values,
    match_eigenvalues,
    numerical_rank,
    ordered_schur,
)
from blayer_verify.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

Array = np.ndarray

# All branches through a multiplicity change strictly incoming (+1) or outgoing (−1).
totally_nonglancing_sign = normal_derivative_sign


# ─── H₀ ───────────────────────────────────────────────────────

def limit_symbol_H0(system: SystemModel, endstate: Endstate, fp: FrequencyPoint,
                    coordinates: str = "conservative") -> Array:
    """
    H₀ at the endstate coefficients.

    ``coordinates="symmetric"`` uses Ã⁰₊, Ã^j₊ of the symmetrized form; the
    two choices are similar matrices.
    """
    if coordinates == "conservative":
        A0, A = np.eye(system.n), endstate.dF
    elif coordinates == "symmetric":
        if endstate.A_sym is None:
            raise RejectedInputError(f"{system.name} has no symmetrized form")
        A0, A = endstate.A0_sym, endstate.A_sym
    else:
        raise RejectedInputError(f"unknown coordinates '{coordinates}'")
    rhs = fp.lam * A0 + sum((1j * fp.xi[j - 1] * A[j] for j in range(1, system.d)),
                            np.zeros((system.n, system.n), dtype=complex))
    try:
        return -np.linalg.solve(A[0], rhs)
    except np.linalg.LinAlgError as e:
        raise RejectedInputError("A¹₊ is singular; H₀ is undefined (boundary characteristic)") from e


# ─── H/P splitting ────────────────────────────────────────────

@dataclass(frozen=True)
class BlockDecomposition:
    """V⁻¹ G₊ V = diag(H_W, P) with H the slow block in U-coordinates."""

    fp: FrequencyPoint
    V: Array
    V_inv: Array
    H: Array
    P: Array
    H0: Array
    gap: float
    residual: float

    @property
    def H_error(self) -> float:
        return float(np.linalg.norm(self.H - self.H0, 2))

    @property
    def slow_eigenvalues(self) -> Array:
        return np.linalg.eigvals(self.H)

    @property
    def fast_eigenvalues(self) -> Array:
        return np.linalg.eigvals(self.P)

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.fp.to_dict(),
            "dim_H": int(self.H.shape[0]),
            "dim_P": int(self.P.shape[0]),
            "gap": self.gap,
            "residual": self.residual,
            "H_error": self.H_error,
        }


def limit_matrix(system: SystemModel, endstate: Endstate, fp: FrequencyPoint) -> tuple[Array, Array]:
    """G₊(λ, ξ̃) and the map P₊ = M₊⁻¹ from m to U."""
    c = coefficients_at(system, endstate.U, np.zeros(system.n))
    return assemble(c, fp.lam, fp.xi, system.n_hyp).G, c.P


def split_HP(system: SystemModel, endstate: Endstate, fp: FrequencyPoint, *,
             rho_max: float = RHO_MAX_LOW, gap_min: float = SPECTRAL_GAP_MIN) -> BlockDecomposition:
    """
    Block-diagonalize G₊ into its n slowest and r fastest eigenvalues.

    Raises SplittingFailure when the fast eigenvalues come closer than
    ``gap_min`` to the imaginary axis or do not separate from the slow ones.
    """
    if not 0.0 < fp.rho <= rho_max:
        raise RejectedInputError(f"split_HP needs 0 < ρ ≤ {rho_max}, got ρ = {fp.rho:.3g}")
    n = system.n
    G, P_plus = limit_matrix(system, endstate, fp)
    w = sla.eigvals(G)
    order = np.argsort(np.abs(w), kind="stable")
    slow = np.zeros(w.size, dtype=bool)
    slow[order[:n]] = True
    fast = w[~slow]
    gap = float(np.min(np.abs(np.real(fast)), initial=np.inf))
    if fast.size and (gap < gap_min or np.min(np.abs(fast)) <= np.max(np.abs(w[slow]), initial=0.0)):
        logger.error("H/P splitting failed at ρ=%.3g: gap %.3e", fp.rho, gap)
        raise SplittingFailure(f"spectral gap {gap:.3e} below {gap_min:.1e} at ρ = {fp.rho:.3g}",
                               gap=gap, eigenvalues=to_jsonable(w))

    split = ordered_schur(G, slow)
    V, V_inv = block_diagonalizer(split)
    k = split.k
    T11, T22 = split.selected_block, split.remaining_block
    D = V_inv @ G @ V
    target = sla.block_diag(T11, T22)
    residual = float(np.linalg.norm(D - target) / max(np.linalg.norm(G), 1e-300))

    X = P_plus @ V[:n, :k]
    H = X @ T11 @ np.linalg.inv(X)
    H0 = limit_symbol_H0(system, endstate, fp)
    logger.debug("Split at ρ=%.3g: gap %.3e, residual %.2e, |H − H₀| %.3e", fp.rho, gap, residual,
                 float(np.linalg.norm(H - H0, 2)))
    return BlockDecomposition(fp, V, V_inv, H, T22, H0, gap, residual)


def align_phases(previous: Array, current: Array) -> Array:
    """Rescale the columns of ``current`` by unit phases so ⟨previous_j, current_j⟩ > 0."""
    inner = np.einsum("ij,ij->j", previous.conj(), current)
    phase = np.where(np.abs(inner) > 0, inner / np.abs(np.where(inner == 0, 1, inner)), 1.0)
    return current / phase


def decomposition_sweep(system: SystemModel, endstate: Endstate, direction: FrequencyPoint,
                        rhos: Sequence[float]) -> list[BlockDecomposition]:
    """split_HP along ρ ↦ ρ ζ̂, with eigenvector phases continued from point to point."""
    zeta = _unit(direction)
    out: list[BlockDecomposition] = []
    for rho in rhos:
        dec = split_HP(system, endstate, _scaled(zeta, rho))
        if out:
            V = dec.V.copy()
            V = align_phases(out[-1].V, V)
            dec = BlockDecomposition(dec.fp, V, np.linalg.inv(V), dec.H, dec.P, dec.H0, dec.gap, dec.residual)
        out.append(dec)
    return out


def h_expansion_fit(system: SystemModel, endstate: Endstate, direction: FrequencyPoint,
                    rhos: Sequence[float]) -> dict[str, FitResult]:
    """Log-log slopes of ‖H − H₀‖ (expected 2) and of the spectral radius of H (expected 1)."""
    decs = decomposition_sweep(system, endstate, direction, rhos)
    rho = np.array([d.fp.rho for d in decs])
    err = np.array([d.H_error for d in decs])
    radius = np.array([np.max(np.abs(d.slow_eigenvalues)) for d in decs])
    fits = {"H_error": loglog_fit(rho, err), "slow_radius": loglog_fit(rho, radius)}
    logger.info("H − H₀ slope %.3f, slow spectral radius slope %.3f",
                fits["H_error"].slope, fits["slow_radius"].slope)
    return fits


def _unit(fp: FrequencyPoint) -> FrequencyPoint:
    rho = fp.rho
    if rho == 0.0:
        raise RejectedInputError("direction ζ̂ must be nonzero")
    return FrequencyPoint(fp.xi / rho, fp.lam / rho)


def _scaled(zeta: FrequencyPoint, rho: float) -> FrequencyPoint:
    return FrequencyPoint(rho * zeta.xi, rho * zeta.lam)


# ─── Block classification ─────────────────────────────────────

@dataclass(frozen=True)
class BlockInfo:
    """One block Q_k of Ĥ = H/ρ."""

    members: tuple[int, ...]
    size: int
    kind: str
    mu: float                       # base eigenvalue iμ_k (imaginary part)
    eigenvalues: Array
    jordan: bool
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({
            "size": self.size,
            "kind": self.kind,
            "mu": self.mu,
            "eigenvalues": self.eigenvalues,
            "jordan": self.jordan,
            **self.diagnostics,
        })


def _scaled_eigs(system: SystemModel, endstate: Endstate, tau: float, gamma: float,
                 xi: Array, rho: float) -> Array:
    """Eigenvalues of Ĥ at (τ̂, γ̂, ξ̂) and ρ; ζ̂ is used as given (not renormalized)."""
    fp = FrequencyPoint(rho * np.asarray(xi, dtype=float), complex(rho * gamma, rho * tau))
    dec = split_HP(system, endstate, fp, rho_max=np.inf)
    return dec.slow_eigenvalues / rho


def _tracked(reference: Array, values: Array) -> Array:
    return values[match_eigenvalues(reference, values)]


def _sign_derivatives(system, endstate, tau, gamma, xi, rho, base: Array, h: float) -> tuple[Array, Array]:
    """Central differences of Re μ in γ̂ and ρ for the eigenvalues ``base`` of Ĥ."""
    full = _scaled_eigs(system, endstate, tau, gamma, xi, rho)
    idx = match_eigenvalues(base, full)

    def re(g, r):
        return np.real(_tracked(full, _scaled_eigs(system, endstate, tau, g, xi, r))[idx])

    d_gamma = (re(gamma + h, rho) - re(gamma - h, rho)) / (2.0 * h)
    d_rho = (re(gamma, rho * (1 + h)) - re(gamma, rho * (1 - h))) / (2.0 * h * rho)
    return d_gamma, d_rho


def _lower_left(eigs: Array, center: complex) -> tuple[complex, bool]:
    """Lower-left entry a of the companion form of Q − iμ, and whether that form is exact."""
    poly = np.poly(np.asarray(eigs) - center)
    inner = poly[1:-1]
    scale = max(1.0, float(np.max(np.abs(poly))))
    return complex(-poly[-1]), bool(np.all(np.abs(inner) <= 1e-10 * scale))


def classify_blocks(
    system: SystemModel,
    endstate: Endstate,
    fp: FrequencyPoint,
    *,
    decomposition: BlockDecomposition | None = None,
    cluster_tol: float | None = None,
    step: float = SIGN_TEST_STEP,
) -> list[BlockInfo]:
    """
    Group the eigenvalues of Ĥ = H/ρ into blocks and name each block.

    elliptic±        all real parts of one sign
    hyperbolic±      ν = 1 on the imaginary axis with ∂_γ̂ Re μ · ∂_ρ Re μ > 0
    glancing         ν > 1 forming a single Jordan block
    totally-nonglancing±  ν > 1 semisimple, ∂_γ̂ Re μ of one sign for all members
    unclassified     the tests disagree; diagnostics say how
    """
    dec = decomposition or split_HP(system, endstate, fp)
    rho = fp.rho
    tau, gamma, xi = fp.polar
    Hhat = dec.H / rho
    w = np.linalg.eigvals(Hhat)
    scale = max(1.0, float(np.max(np.abs(w))))
    tol = cluster_tol if cluster_tol is not None else max(1e-8, 4.0 * np.sqrt(rho)) * scale
    rank_tol = max(JORDAN_RANK_TOL, (tol / scale) ** 2)

    blocks: list[BlockInfo] = []
    for members in cluster_values(w, tol):
        eigs = w[members]
        size = len(members)
        center = complex(np.mean(eigs))
        on_axis = bool(np.all(np.abs(np.real(eigs)) <= tol))
        split = ordered_schur(Hhat, np.isin(np.arange(w.size), members))
        Q = split.selected_block
        diag: dict[str, Any] = {}
        jordan = False
        if not on_axis:
            herm = np.linalg.eigvalsh(0.5 * (Q + Q.conj().T))
            diag["hermitian_part"] = herm
            if np.all(np.real(eigs) > tol):
                kind = "elliptic+"
            elif np.all(np.real(eigs) < -tol):
                kind = "elliptic-"
            else:
                kind = "unclassified"
                diag["reason"] = "mixed real parts in one cluster"
            diag["hermitian_definite"] = bool(np.all(herm > 0) or np.all(herm < 0))
        else:
            d_gamma, d_rho = _sign_derivatives(system, endstate, tau, gamma, xi, rho, eigs, step)
            diag.update(d_gamma=d_gamma, d_rho=d_rho)
            if size == 1:
                product = float(d_gamma[0] * d_rho[0])
                diag["sign_product"] = product
                if product > 0:
                    kind = "hyperbolic+" if d_gamma[0] > 0 else "hyperbolic-"
                else:
                    kind = "unclassified"
                    diag["reason"] = "∂_γ̂ Re μ and ∂_ρ Re μ do not share a strict sign"
            else:
                rank = numerical_rank(Q - center * np.eye(size), rank_tol)
                jordan = rank == size - 1
                diag["rank"] = rank
                if jordan:
                    kind = "glancing"
                    a, companion = _lower_left(eigs, center)
                    diag.update(lower_left=a, companion=companion)
                    if not companion:
                        logger.warning("Glancing block of size %d is not in exact companion form", size)
                elif np.all(d_gamma > 0):
                    kind = "totally-nonglancing+"
                elif np.all(d_gamma < 0):
                    kind = "totally-nonglancing-"
                else:
                    kind = "unclassified"
                    diag["reason"] = f"rank {rank} of Q − iμ is neither {size - 1} nor sign-definite"
        if kind == "unclassified":
            logger.warning("Block of size %d at %s left unclassified: %s", size, center, diag.get("reason"))
        blocks.append(BlockInfo(tuple(members), size, kind, float(np.imag(center)), eigs, jordan, diag))

    assigned = sorted(i for b in blocks for i in b.members)
    if assigned != list(range(w.size)):
        raise SplittingFailure("block classification did not partition the slow spectrum")
    logger.info("Blocks at ρ=%.3g: %s", rho, ", ".join(f"{b.kind}({b.size})" for b in blocks))
    return blocks


# ─── Glancing coefficient ─────────────────────────────────────

@dataclass(frozen=True)
class GlancingCoefficient:
    """q = c |∇_ξ̃ λ_k| with c = ν!/|∂^ν_{ξ₁} λ_k| at a glancing point."""

    q: float
    order: int
    normal_derivative: float
    tangential_gradient: float
    a: float                 # signed ν-th power of the fan: δ^ν = a σ

    @property
    def constant(self) -> float:
        return factorial(self.order) / abs(self.normal_derivative)

    def to_dict(self) -> dict[str, Any]:
        return {"q": self.q, "order": self.order, "normal_derivative": self.normal_derivative,
                "tangential_gradient": self.tangential_gradient, "constant": self.constant, "a": self.a}


def _branch_value(jacs: Array, xi: Array, members: Sequence[int]) -> float:
    return float(np.mean(np.real(sorted_eigenvalues(symbol(jacs, xi))[list(members)])))


def q_coefficient(system: SystemModel, endstate: Endstate, point: GlancingPoint,
                  max_order: int = 4) -> GlancingCoefficient:
    """
    Glancing coefficient from a local polynomial fit of the branch along ξ₁.

    The order ν is the first derivative ∂^k_{ξ₁}λ_k, k ≥ 2, that is
    numerically nonzero.  q = 0 is a legitimate answer and signals that
    the tangential gradient vanishes.
    """
    jacs = endstate.dF
    xi = np.asarray(point.xi, dtype=float)
    h = 1e-2 * (1.0 + float(np.linalg.norm(xi)))
    t = np.arange(-6, 7, dtype=float)
    values = np.array([_branch_value(jacs, xi + h * s * np.eye(system.d)[0], point.branch) for s in t])
    coef = np.polynomial.polynomial.polyfit(t, values - values[6], 2 * max_order - 2)
    derivs = np.array([factorial(k) * coef[k] / h ** k for k in range(coef.size)])
    scale = max(1.0, abs(point.value))
    order, dnu = max_order, float(derivs[max_order])
    for k in range(2, max_order + 1):
        if abs(derivs[k]) > 1e-4 * scale:
            order, dnu = k, float(derivs[k])
            break
    grad = point.tangential_norm
    if dnu == 0.0:
        raise RejectedInputError("branch is flat in ξ₁ to the tested order; no glancing order")
    q = factorial(order) * grad / abs(dnu)
    a = -factorial(order) * grad / dnu
    logger.debug("Glancing point %s: order %d, ∂^ν λ = %.6g, |∇̃λ| = %.6g, q = %.6g",
                 xi.tolist(), order, dnu, grad, q)
    return GlancingCoefficient(float(q), order, dnu, grad, float(a))


# ─── Glancing expansion ───────────────────────────────────────

def model_glancing_block(nu: int, mu: float, q: float, sigma: float) -> Array:
    """iμ I + J + a e_ν e₁ᵀ with a = i^ν q σ; its eigenvalues are iμ + i(qσ)^{1/ν} ε^j."""
    Q = 1j * mu * np.eye(nu, dtype=complex) + np.eye(nu, k=1)
    Q[nu - 1, 0] += (1j ** nu) * q * sigma
    return Q


def fan(mu: float, a: complex, sigma: float, nu: int) -> Array:
    """iμ + i δ_j with δ_j the ν-th roots of a σ."""
    roots = np.power(complex(a * sigma), 1.0 / nu) * np.exp(2j * np.pi * np.arange(nu) / nu)
    return 1j * mu + 1j * roots


@dataclass(frozen=True)
class GlancingExpansion:
    sigmas: Array
    errors: Array            # max |computed − predicted| / σ^{1/ν}
    margins: Array           # pairing margin / σ^{1/ν}
    computed: list[Array]
    predicted: list[Array]

    @property
    def decreasing(self) -> bool:
        order = np.argsort(self.sigmas)[::-1]
        e = self.errors[order]
        return bool(np.all(np.diff(e) <= 1e-12 + 0.05 * e[:-1]))

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({"sigmas": self.sigmas, "normalized_errors": self.errors,
                            "pairing_margins": self.margins, "decreasing": self.decreasing})


def glancing_expansion_check(block_eigenvalues, sigmas: Sequence[float], mu: float, a: complex,
                             nu: int) -> GlancingExpansion:
    """
    Compare the eigenvalues returned by ``block_eigenvalues(σ)`` with the
    ν-th root fan iμ + i(aσ)^{1/ν}ε^j, pairing them by minimal total distance.
    """
    sig = np.asarray(sigmas, dtype=float)
    errors, margins, computed, predicted = [], [], [], []
    for s in sig:
        got = np.asarray(block_eigenvalues(float(s)))
        want = fan(mu, a, float(s), nu)
        perm = match_eigenvalues(want, got)
        dist = np.abs(got[perm] - want)
        radius = s ** (1.0 / nu) if s > 0 else 1.0
        all_d = np.abs(want[:, None] - got[None, :])
        if nu > 1:
            second = np.sort(all_d, axis=1)[:, 1]
            margins.append(float(np.min(second - dist)) / radius)
        else:
            margins.append(float("inf"))
        errors.append(float(np.max(dist)) / radius)
        computed.append(got[perm])
        predicted.append(want)
    result = GlancingExpansion(sig, np.array(errors), np.array(margins), computed, predicted)
    if np.any(result.margins < 0):
        logger.warning("Ambiguous eigenvalue pairing in the glancing fan (margin %.3g)", float(result.margins.min()))
    return result


def glancing_fan_eigenvalues(system: SystemModel, endstate: Endstate, point: GlancingPoint,
                             coefficient: GlancingCoefficient):
    """
    σ ↦ the ν eigenvalues of H₀ nearest iξ₁* at λ = −iλ_k(ξ*), ξ̃ = ξ̃* + σ ∇̃λ/|∇̃λ|.

    These are the eigenvalues of the glancing block at ρ = γ̂ = 0.
    """
    xi = np.asarray(point.xi, dtype=float)
    grad = np.asarray(point.gradient[1:], dtype=float)
    norm = float(np.linalg.norm(grad))
    if norm == 0.0:
        raise RejectedInputError("vanishing tangential gradient: no fan to follow")
    e = grad / norm
    mu = float(xi[0])

    def eigs(sigma: float) -> Array:
        fp = FrequencyPoint(xi[1:] + sigma * e, complex(0.0, -point.value))
        w = np.linalg.eigvals(limit_symbol_H0(system, endstate, fp))
        return w[np.argsort(np.abs(w - 1j * mu))[: coefficient.order]]

    return eigs


# ─── Glancing diagonalizer ────────────────────────────────────

def bound_parameters(nu: int, sigma: float) -> tuple[float, float]:
    """α = σ^{(1 − ⌊(ν+1)/2⌋)/ν}, β = σ^{−1 + 1/ν}."""
    alpha = sigma ** ((1 - (nu + 1) // 2) / nu)
    beta = sigma ** (-1.0 + 1.0 / nu)
    return float(alpha), float(beta)


@dataclass(frozen=True)
class GlancingDiagonalizer:
    T: Array
    T_inv: Array
    eigenvalues: Array        # decaying first
    norm_T: float
    norm_T_inv: float
    norm_T_inv_minus: float   # rows of T⁻¹ onto the decaying modes
    alpha: float
    beta: float
    residual: float
    companion: bool

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable({
            "eigenvalues": self.eigenvalues,
            "norm_T": self.norm_T,
            "norm_T_inv": self.norm_T_inv,
            "norm_T_inv_minus": self.norm_T_inv_minus,
            "alpha": self.alpha,
            "beta": self.beta,
            "beta_over_alpha2": self.beta / self.alpha ** 2,
            "residual": self.residual,
            "companion": self.companion,
        })


def build_T_Hg(Q: Array, sigma: float, q: float | None = None) -> GlancingDiagonalizer:
    """
    Diagonalizer of a glancing block at distance σ > 0.

    A block in companion form iμ + J + a e_ν e₁ᵀ is diagonalized by the
    Vandermonde matrix of its root fan; any other block by its eigenvectors.
    Columns have unit norm.  q = 0 is refused.
    """
    Q = np.asarray(Q, dtype=complex)
    nu = Q.shape[0]
    if q is not None and q == 0.0:
        raise RejectedInputError("q = 0: the glancing fan degenerates and no σ-uniform diagonalizer exists")
    if sigma <= 0.0:
        raise RejectedInputError("build_T_Hg needs σ > 0")
    center = np.trace(Q) / nu
    shifted = Q - center * np.eye(nu)
    model = np.eye(nu, k=1, dtype=complex)
    model[nu - 1, 0] = shifted[nu - 1, 0]
    companion = bool(np.linalg.norm(shifted - model) <= 1e-12 * max(1.0, np.linalg.norm(Q)))

    w = np.linalg.eigvals(Q)
    w = w[np.lexsort((np.imag(w), np.real(w)))]
    if companion:
        T = np.vander(w - center, nu, increasing=True).T
    else:
        vals, vecs = np.linalg.eig(Q)
        T = vecs[:, match_eigenvalues(w, vals)]
    T = T / np.linalg.norm(T, axis=0)
    T_inv = np.linalg.inv(T)
    residual = float(np.linalg.norm(T_inv @ Q @ T - np.diag(w)) / max(np.linalg.norm(Q), 1e-300))
    if residual > DIAGONALIZER_RESIDUAL:
        raise SplittingFailure(f"glancing diagonalizer residual {residual:.2e} exceeds {DIAGONALIZER_RESIDUAL:.0e}", residual=residual)
    decaying = np.real(w) < 0
    alpha, beta = bound_parameters(nu, sigma)
    minus = float(np.linalg.norm(T_inv[decaying], 2)) if decaying.any() else 0.0
    return GlancingDiagonalizer(T, T_inv, w, float(np.linalg.norm(T, 2)), float(np.linalg.norm(T_inv, 2)),
                                minus, alpha, beta, residual, companion)


def T_bound_sweep(nu: int, q: float, sigmas: Sequence[float], mu: float = 0.0) -> dict[str, Any]:
    """
    ‖T‖, ‖T⁻¹‖ and ‖T⁻¹|_{H_g−}‖ on the model block over a σ sweep.

    Reports the fitted slope of log‖T⁻¹‖ against log σ (−1 + 1/ν expected)
    and the smallest constants C with ‖T‖ ≤ C, ‖T⁻¹‖ ≤ Cβ, ‖T⁻¹|_−‖ ≤ Cα.
    """
    sig = np.asarray(sigmas, dtype=float)
    diags = [build_T_Hg(model_glancing_block(nu, mu, q, s), s, q) for s in sig]
    out = _sweep_summary(sig, diags)
    logger.info("T_Hg sweep (ν=%d): slope of ‖T⁻¹‖ %.3f, C_T %.3g, C_β %.3g", nu, out["slope_T_inv"].slope,
                out["C_T"], out["C_beta"])
    return out


def _sweep_summary(sig: Array, diags: Sequence[GlancingDiagonalizer]) -> dict[str, Any]:
    fit = loglog_fit(sig, np.array([g.norm_T_inv for g in diags]))
    return {
        "slope_T_inv": fit,
        "C_T": float(max(g.norm_T for g in diags)),
        "C_beta": float(max(g.norm_T_inv / g.beta for g in diags)),
        "C_alpha": float(max(g.norm_T_inv_minus / g.alpha for g in diags)),
        "beta_over_alpha2_min": float(min(g.beta / g.alpha ** 2 for g in diags)),
    }


def glancing_block_matrix(system: SystemModel, endstate: Endstate, point: GlancingPoint,
                          coefficient: GlancingCoefficient, sigma: float) -> Array:
    """
    The ν×ν block of H₀ carrying the glancing fan at ξ̃ = ξ̃* + σ ∇̃λ/|∇̃λ|.

    This is the triangular Schur block of the ν eigenvalues nearest iξ₁*,
    the same eigenvalues ``glancing_fan_eigenvalues`` follows.
    """
    xi = np.asarray(point.xi, dtype=float)
    grad = np.asarray(point.gradient[1:], dtype=float)
    norm = float(np.linalg.norm(grad))
    if norm == 0.0:
        raise RejectedInputError("vanishing tangential gradient: no glancing block to follow")
    H0 = limit_symbol_H0(system, endstate, FrequencyPoint(xi[1:] + sigma * grad / norm, complex(0.0, -point.value)))
    w = sla.eigvals(H0)
    mask = np.zeros(w.size, dtype=bool)
    mask[np.argsort(np.abs(w - 1j * float(xi[0])))[: coefficient.order]] = True
    split = ordered_schur(H0, mask)
    if split.k != coefficient.order:
        raise SplittingFailure(f"Schur reordering kept {split.k} of the {coefficient.order} glancing eigenvalues",
                               sigma=sigma)
    return split.selected_block


def glancing_T_sweep(system: SystemModel, endstate: Endstate, point: GlancingPoint,
                     coefficient: GlancingCoefficient, sigmas: Sequence[float], *,
                     gradient_tol: float = GRADIENT_TOL) -> dict[str, Any]:
    """``T_bound_sweep`` on the system's own glancing block instead of the model block."""
    if coefficient.q == 0.0 or point.tangential_norm <= gradient_tol:
        raise RejectedInputError("q = 0: the glancing fan degenerates and no σ-uniform diagonalizer exists")
    sig = np.asarray(sigmas, dtype=float)
    diags = [build_T_Hg(glancing_block_matrix(system, endstate, point, coefficient, s), s, coefficient.q)
             for s in sig]
    out = _sweep_summary(sig, diags)
    logger.info("T_Hg sweep on the glancing block at ξ* = %s: slope of ‖T⁻¹‖ %.3f, C_T %.3g",
                np.round(point.xi, 4), out["slope_T_inv"].slope, out["C_T"])
    return out


# ─── Module run ───────────────────────────────────────────────

def base_direction(d: int) -> FrequencyPoint:
    """Unit ζ̂ with γ̂ = 0.8 and ξ̂ spread evenly over the tangential axes."""
    if d == 1:
        return FrequencyPoint.make([], 1.0)
    return FrequencyPoint.make(0.6 * np.ones(d - 1) / np.sqrt(d - 1), 0.8)


def hp_splitting_check(system: SystemModel, endstate: Endstate, direction: FrequencyPoint,
                       rhos: Sequence[float], *, rho_max: float = RHO_MAX_LOW,
                       slack: float = SLOPE_SLACK) -> tuple[CheckResult, list[BlockDecomposition]]:
    """Dimensions n and r of the two blocks, ‖H − H₀‖ = O(ρ²) and slow eigenvalues O(ρ)."""
    if system.hyperbolic_only:
        return CheckResult("hp-splitting", Verdict.NOT_APPLICABLE, {"note": "no parabolic block"}), []
    zeta = _unit(direction)
    try:
        decs = [split_HP(system, endstate, _scaled(zeta, rho), rho_max=rho_max) for rho in rhos]
    except (SplittingFailure, RejectedInputError) as e:
        return CheckResult("hp-splitting", Verdict.INDETERMINATE, dict(getattr(e, "diagnostics", {})),
                           note=str(e)), []
    rho = np.array([d.fp.rho for d in decs])
    err = np.array([d.H_error for d in decs])
    radius = np.array([np.max(np.abs(d.slow_eigenvalues)) for d in decs])
    scale = max(1.0, max(float(np.linalg.norm(d.H0, 2)) for d in decs))
    exact = bool(np.all(err <= 1e-12 * scale))
    fit_err = None if exact else loglog_fit(rho, err)
    fit_rad = loglog_fit(rho, radius)
    dims_ok = all(d.H.shape[0] == system.n and d.P.shape[0] == system.r for d in decs)
    residual = max(d.residual for d in decs)
    measured = {
        "rho": rho,
        "H_error": err,
        "H_error_slope": fit_err if fit_err is None else fit_err.to_dict(),
        "slow_radius_slope": fit_rad.to_dict(),
        "gap_min": min(d.gap for d in decs),
        "residual_max": residual,
        "dim_H": int(decs[0].H.shape[0]),
        "dim_P": int(decs[0].P.shape[0]),
    }
    ok_err = exact or abs(fit_err.slope - 2.0) <= 2.0 * slack
    ok_rad = abs(fit_rad.slope - 1.0) <= slack
    if dims_ok and ok_err and ok_rad and residual <= DIAGONALIZER_RESIDUAL:
        verdict = Verdict.PASS
    elif (fit_err is not None and fit_err.unreliable) or fit_rad.unreliable:
        verdict = Verdict.INDETERMINATE
    else:
        verdict = Verdict.FAIL
    note = "H coincides with H₀ to rounding" if exact else ""
    logger.info("H/P splitting: %s (dim H %d, dim P %d)", verdict.value, measured["dim_H"], measured["dim_P"])
    return CheckResult("hp-splitting", verdict, measured, note=note), decs


def _kinds(blocks: Sequence[BlockInfo]) -> list[tuple[str, int]]:
    return sorted((b.kind, b.size) for b in blocks)


def classification_check(system: SystemModel, endstate: Endstate, fp: FrequencyPoint, *,
                         rho_max: float = RHO_MAX_LOW) -> tuple[CheckResult, list[BlockInfo]]:
    """Classify at ζ and verify the kinds do not change between ρ/2 and 2ρ."""
    zeta = _unit(fp)
    rho = fp.rho
    found: dict[float, list[BlockInfo]] = {}
    try:
        for r in (rho, 0.5 * rho, min(2.0 * rho, rho_max)):
            at = _scaled(zeta, r)
            found[r] = classify_blocks(system, endstate, at,
                                       decomposition=split_HP(system, endstate, at, rho_max=rho_max))
    except (SplittingFailure, RejectedInputError) as e:
        return CheckResult("block-classification", Verdict.INDETERMINATE, {"rho": rho}, note=str(e)), []
    blocks = found[rho]
    kinds = {f"{r:.3g}": [f"{k}({s})" for k, s in _kinds(b)] for r, b in found.items()}
    stable = all(_kinds(b) == _kinds(blocks) for b in found.values())
    unclassified = [b.to_dict() for b in blocks if b.kind == "unclassified"]
    measured = {"rho": rho, "kinds": kinds, "stable": stable, "blocks": [b.to_dict() for b in blocks]}
    if stable and not unclassified:
        return CheckResult("block-classification", Verdict.PASS, measured), blocks
    witness = {"unclassified": unclassified} if unclassified else {"kinds": kinds}
    return CheckResult("block-classification", Verdict.INDETERMINATE, measured, witness), blocks


def glancing_frequency(point: GlancingPoint, rho: float) -> FrequencyPoint:
    """The low frequency ρ ζ̂ over a glancing point: ξ̃ = ξ̃*, λ = −iλ_k(ξ*)."""
    xi = np.asarray(point.xi, dtype=float)
    return _scaled(_unit(FrequencyPoint.make(xi[1:], complex(0.0, -point.value))), rho)


def _glancing_block(system: SystemModel, endstate: Endstate, point: GlancingPoint, rho: float,
                    nu: int) -> dict[str, Any]:
    try:
        blocks = classify_blocks(system, endstate, glancing_frequency(point, rho))
    except (SplittingFailure, RejectedInputError) as e:
        return {"block": Verdict.INDETERMINATE, "block_note": str(e)}
    hit = [b for b in blocks if b.kind == "glancing" and b.size == nu]
    out: dict[str, Any] = {"blocks": [f"{b.kind}({b.size})" for b in blocks],
                           "block": Verdict.PASS if hit else Verdict.INDETERMINATE}
    if hit:
        out["lower_left"] = hit[0].diagnostics.get("lower_left")
        out["companion"] = hit[0].diagnostics.get("companion")
    return out


def _glancing_point_report(system: SystemModel, endstate: Endstate, point: GlancingPoint,
                           section: SymbolSection, gradient_tol: float, slack: float) -> dict[str, Any]:
    """Coefficient, block structure, fan expansion and diagonalizer bounds at one glancing point."""
    out: dict[str, Any] = {"point": point.to_dict()}
    try:
        coefficient = q_coefficient(system, endstate, point)
    except RejectedInputError as e:
        out.update(block=Verdict.INDETERMINATE, expansion=Verdict.INDETERMINATE,
                   diagonalizer=Verdict.INDETERMINATE, note=str(e))
        return out
    out["coefficient"] = coefficient.to_dict()
    nu = coefficient.order

    if system.hyperbolic_only:
        out["block"] = Verdict.NOT_APPLICABLE
    else:
        out.update(_glancing_block(system, endstate, point, min(section.rho_sweep), nu))

    if point.tangential_norm <= gradient_tol:
        out["expansion"] = Verdict.NOT_APPLICABLE
        out["diagonalizer"] = Verdict.NOT_APPLICABLE
        out["note"] = "q = 0: the glancing fan degenerates; diagonalizer refused"
        return out

    expansion = glancing_expansion_check(glancing_fan_eigenvalues(system, endstate, point, coefficient),
                                         section.sigma_values, float(point.xi[0]), coefficient.a, nu)
    out["expansion_report"] = expansion.to_dict()
    finest = float(expansion.errors[int(np.argmin(expansion.sigmas))])
    if np.any(expansion.margins < 0):
        out["expansion"] = Verdict.INDETERMINATE
    elif expansion.decreasing and finest <= GLANCING_FAN_TOL:
        out["expansion"] = Verdict.PASS
    else:
        out["expansion"] = Verdict.FAIL

    sigmas = [2.0 ** -m for m in section.sigma_exponents]
    expected = -1.0 + 1.0 / nu
    try:
        model = T_bound_sweep(nu, coefficient.q, sigmas, mu=float(point.xi[0]))
        own = glancing_T_sweep(system, endstate, point, coefficient, sigmas, gradient_tol=gradient_tol)
    except (SplittingFailure, RejectedInputError) as e:
        out["diagonalizer"] = Verdict.INDETERMINATE
        out["diagonalizer_note"] = str(e)
        return out
    out["diagonalizer_report"] = {**model, "slope_T_inv": model["slope_T_inv"].to_dict(),
                                  "expected_slope": expected,
                                  "block": {**own, "slope_T_inv": own["slope_T_inv"].to_dict()}}
    ok = (abs(model["slope_T_inv"].slope - expected) <= slack
          and abs(own["slope_T_inv"].slope - expected) <= slack
          and model["beta_over_alpha2_min"] >= 1.0 - 1e-12)
    out["diagonalizer"] = Verdict.PASS if ok else Verdict.FAIL
    return out


@dataclass(frozen=True)
class SymbolReport:
    checks: dict[str, CheckResult]
    sweep: tuple[BlockDecomposition, ...] = ()
    blocks: tuple[BlockInfo, ...] = ()
    glancing: tuple[dict[str, Any], ...] = ()

    @property
    def verdict(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks.values())

    def rows(self) -> list[dict[str, Any]]:
        return [d.to_dict() for d in self.sweep]

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict.value,
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "sweep": to_jsonable(self.rows()),
            "blocks": [b.to_dict() for b in self.blocks],
            "glancing": to_jsonable(list(self.glancing)),
        }


_GLANCING_CHECKS = {"block": "glancing-block", "expansion": "glancing-expansion",
                    "diagonalizer": "glancing-diagonalizer"}


def run_symbol(system: SystemModel, endstate: Endstate, section: SymbolSection | None = None, *,
               glancing: Sequence[GlancingPoint] | None = None, gradient_tol: float = GRADIENT_TOL,
               slack: float = SLOPE_SLACK, workers: int | None = None) -> SymbolReport:
    """H/P splitting, block classification and, at every glancing point, fan and diagonalizer checks."""
    section = section or SymbolSection()
    direction = base_direction(system.d)
    checks: dict[str, CheckResult] = {}
    checks["hp-splitting"], decs = hp_splitting_check(system, endstate, direction, section.rho_sweep,
                                                      rho_max=section.rho_max_low, slack=slack)
    blocks: list[BlockInfo] = []
    if system.hyperbolic_only:
        checks["block-classification"] = CheckResult("block-classification", Verdict.NOT_APPLICABLE,
                                                      {"note": "no parabolic block"})
    else:
        checks["block-classification"], blocks = classification_check(
            system, endstate, _scaled(direction, min(section.rho_sweep)), rho_max=section.rho_max_low)

    if glancing is None:
        glancing = find_glancing_points(system, endstate)[0] if system.d > 1 else []
    if not glancing:
        for name in _GLANCING_CHECKS.values():
            checks[name] = CheckResult(name, Verdict.NOT_APPLICABLE, {"note": "no glancing points"})
        points: list[dict[str, Any]] = []
    else:
        points = parallel_map(
            lambda p: _glancing_point_report(system, endstate, p, section, gradient_tol, slack),
            list(glancing), workers)
        for key, name in _GLANCING_CHECKS.items():
            verdicts = [p[key] for p in points]
            verdict = Verdict.combine(verdicts)
            bad = next((p for p in points if p[key] in (Verdict.FAIL, Verdict.INDETERMINATE)), None)
            witness = None if bad is None else to_jsonable(bad)
            checks[name] = CheckResult(name, verdict, {"points": len(points),
                                                       "verdicts": [v.value for v in verdicts]}, witness)
    report = SymbolReport(checks, tuple(decs), tuple(blocks), tuple(points))
    logger.info("Symbol analysis on %s: %s (%d glancing points)", system.name, report.verdict.value,
                len(points))
    return report


__all__ = [
    "totally_nonglancing_sign",
    "limit_symbol_H0",
    "BlockDecomposition",
    "limit_matrix",
    "split_HP",
    "align_phases",
    "decomposition_sweep",
    "h_expansion_fit",
    "BlockInfo",
    "classify_blocks",
    "GlancingCoefficient",
    "q_coefficient",
    "model_glancing_block",
    "fan",
    "GlancingExpansion",
    "glancing_expansion_check",
    "glancing_fan_eigenvalues",
    "bound_parameters",
    "GlancingDiagonalizer",
    "build_T_Hg",
    "T_bound_sweep",
    "glancing_block_matrix",
    "glancing_T_sweep",
    "base_direction",
    "hp_splitting_check",
    "classification_check",
    "glancing_frequency",
    "SymbolReport",
    "run_symbol",
]

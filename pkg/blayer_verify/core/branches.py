"""
branches — Eigenvalue branches λ_k(ξ) of the hyperbolic symbol Σ ξ_j dF^j(U₊).

Branches are identified by their slot in the eigenvalues sorted by real
part; a cluster is a run of consecutive slots closer than the cluster
tolerance.  Derivatives of a cluster come from first-order perturbation
of its invariant subspace, with a finite-difference fallback.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla

from blayer_verify.configs.constants import FD_STEP_SCALE, SEMISIMPLE_CONDITION_MAX
from blayer_verify.core.model_core import symbol

logger = logging.getLogger(__name__)


def sorted_eigenvalues(A: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvals(A)
    return w[np.lexsort((np.imag(w), np.real(w)))]


def cluster_tolerance(w: np.ndarray, rel: float) -> float:
    return rel * max(float(np.max(np.abs(w), initial=0.0)), 1.0e-300)


def sorted_clusters(w: np.ndarray, tol: float) -> list[list[int]]:
    """Runs of consecutive sorted slots with neighbours within ``tol``."""
    groups: list[list[int]] = [[0]] if w.size else []
    for i in range(1, w.size):
        if abs(w[i] - w[i - 1]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def multiplicity_pattern(w: np.ndarray, tol: float) -> tuple[int, ...]:
    return tuple(len(g) for g in sorted_clusters(w, tol))


def _cluster_bases(A: np.ndarray, members: list[int]) -> tuple[np.ndarray, np.ndarray, float]:
    w, VL, VR = sla.eig(A, left=True, right=True)
    order = np.lexsort((np.imag(w), np.real(w)))
    idx = order[members]
    R, L = VR[:, idx], VL[:, idx]
    LR = L.conj().T @ R
    return R, L, float(np.linalg.cond(LR))


def cluster_derivatives(jacs: np.ndarray, xi: np.ndarray, members: list[int], axis: int) -> np.ndarray:
    """
    Eigenvalues of (LᴴR)⁻¹ Lᴴ A_axis R for the cluster ``members`` at ξ.

    For a semisimple cluster these are the directional derivatives of the
    branches leaving the cluster along e_axis (0-based axis).
    """
    A = symbol(jacs, xi)
    R, L, cond = _cluster_bases(A, members)
    if cond > SEMISIMPLE_CONDITION_MAX:
        h = FD_STEP_SCALE * (1.0 + float(np.linalg.norm(xi)))
        e = np.zeros_like(xi, dtype=float)
        e[axis] = h
        plus = sorted_eigenvalues(symbol(jacs, xi + e))[members]
        minus = sorted_eigenvalues(symbol(jacs, xi - e))[members]
        logger.debug("Ill-conditioned cluster basis (cond %.2e); finite differences used", cond)
        return (plus - minus) / (2.0 * h)
    M = np.linalg.solve(L.conj().T @ R, L.conj().T @ jacs[axis] @ R)
    return np.linalg.eigvals(M)


def branch_gradient(jacs: np.ndarray, xi: np.ndarray, members: list[int]) -> np.ndarray:
    """∇_ξ of the cluster mean, trace((LᴴR)⁻¹ Lᴴ A_j R)/m for each axis j."""
    xi = np.asarray(xi, dtype=float)
    A = symbol(jacs, xi)
    R, L, cond = _cluster_bases(A, members)
    m = len(members)
    grad = np.empty(jacs.shape[0])
    if cond > SEMISIMPLE_CONDITION_MAX:
        h = FD_STEP_SCALE * (1.0 + float(np.linalg.norm(xi)))
        for j in range(jacs.shape[0]):
            e = np.zeros_like(xi)
            e[j] = h
            plus = np.mean(sorted_eigenvalues(symbol(jacs, xi + e))[members])
            minus = np.mean(sorted_eigenvalues(symbol(jacs, xi - e))[members])
            grad[j] = float(np.real(plus - minus)) / (2.0 * h)
        return grad
    LR = L.conj().T @ R
    for j in range(jacs.shape[0]):
        grad[j] = float(np.real(np.trace(np.linalg.solve(LR, L.conj().T @ jacs[j] @ R)))) / m
    return grad


def normal_derivative_sign(jacs: np.ndarray, xi: np.ndarray, members: list[int]) -> int:
    """
    +1 (−1) when every branch through the cluster has ∂_{ξ₁}λ > 0 (< 0), else 0.

    This is the operational totally-nonglancing test: all normal
    characteristics at a multiplicity change are strictly incoming, or
    strictly outgoing.
    """
    d1 = np.real(cluster_derivatives(jacs, xi, members, axis=0))
    scale = max(1.0, float(np.max(np.abs(d1), initial=0.0)))
    if np.all(d1 > 1e-10 * scale):
        return 1
    if np.all(d1 < -1e-10 * scale):
        return -1
    return 0

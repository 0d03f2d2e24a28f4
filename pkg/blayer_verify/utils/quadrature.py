"""
quadrature — Grids, quadrature rules and discrete norms on the half-line.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import trapezoid


# ─── Grids ────────────────────────────────────────────────────

def stretched_grid(length: float, intervals: int, stretch: float) -> np.ndarray:
    """x_i = L (e^{s i/M} − 1)/(e^s − 1), i = 0..M; clusters nodes near x = 0."""
    i = np.arange(intervals + 1, dtype=float) / intervals
    if stretch == 0.0:
        return length * i
    return length * np.expm1(stretch * i) / np.expm1(stretch)


def gauss_panels(breaks: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss–Legendre rule on consecutive break points."""
    t, w = leggauss(order)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        half = 0.5 * (b - a)
        nodes.append(0.5 * (a + b) + half * t)
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def graded_breaks(upper: float, panels: int, ratio: float = 0.1) -> np.ndarray:
    """0 < upper·ratio^{panels−1} < … < upper·ratio < upper, geometric toward 0."""
    inner = upper * ratio ** np.arange(panels - 1, -1, -1, dtype=float)
    return np.concatenate(([0.0], inner))


def symmetric_graded_rule(upper: float, panels: int, order: int, ratio: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Graded Gauss rule on [−upper, upper], refined toward the origin."""
    x, w = gauss_panels(graded_breaks(upper, panels, ratio), order)
    return np.concatenate((-x[::-1], x)), np.concatenate((w[::-1], w))


# ─── Norms of grid functions ──────────────────────────────────

def pointwise_norm(u: np.ndarray) -> np.ndarray:
    """|u(x_i)| for samples of shape (M,) or (M, n)."""
    u = np.asarray(u)
    return np.abs(u) if u.ndim == 1 else np.linalg.norm(u, axis=1)


def l1_norm(x: np.ndarray, u: np.ndarray) -> float:
    return float(trapezoid(pointwise_norm(u), x))


def l2_norm(x: np.ndarray, u: np.ndarray) -> float:
    return float(np.sqrt(trapezoid(pointwise_norm(u) ** 2, x)))


def linf_norm(u: np.ndarray) -> float:
    return float(np.max(pointwise_norm(u), initial=0.0))


def lp_interpolated(l2: float, linf: float, p: float) -> float:
    """Bound |u|_p ≤ |u|_2^{2/p} |u|_∞^{1−2/p} for p ≥ 2."""
    if np.isinf(p):
        return linf
    return float(l2 ** (2.0 / p) * linf ** (1.0 - 2.0 / p))


# ─── Exponential integrator weights ───────────────────────────

def phi1(z: np.ndarray) -> np.ndarray:
    """(e^z − 1)/z, Taylor series for small |z|."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def phi2(z: np.ndarray) -> np.ndarray:
    """(e^z − 1 − z)/z², Taylor series for small |z|."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    safe = np.where(small, 1.0, z)
    return np.where(small, 0.5 + z / 6.0 + z * z / 24.0, (np.expm1(safe) - safe) / (safe * safe))

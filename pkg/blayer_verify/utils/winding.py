"""
winding — Argument-principle zero counting along sampled closed curves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from blayer_verify.configs.constants import MAX_ARG_STEP, WINDING_TOL

logger = logging.getLogger(__name__)

Path = Callable[[np.ndarray], np.ndarray]
BatchEvaluator = Callable[[np.ndarray], np.ndarray]


def phase_steps(values: np.ndarray) -> np.ndarray:
    """Principal phase increments along the closed polygon values[0] → … → values[-1] → values[0]."""
    v = np.asarray(values, dtype=complex)
    return np.angle(np.roll(v, -1) / v)


def winding_number(values: np.ndarray) -> float:
    """(1/2π) Σ arg(D_{i+1}/D_i) around a closed loop; real-valued, not rounded."""
    return float(np.sum(phase_steps(values)) / (2.0 * np.pi))


@dataclass(frozen=True)
class WindingResult:
    winding: float
    rounded: int
    resolved: bool
    params: np.ndarray
    points: np.ndarray
    values: np.ndarray
    refinements_used: int

    @property
    def min_abs(self) -> float:
        return float(np.min(np.abs(self.values)))


def adaptive_winding(
    path: Path,
    evaluate: BatchEvaluator,
    n_points: int,
    *,
    max_step: float = MAX_ARG_STEP,
    refinements: int = 3,
    tol: float = WINDING_TOL,
) -> WindingResult:
    """
    Winding number of ``evaluate(path(s))`` for s ∈ [0, 1) periodic.

    Intervals whose phase jump exceeds ``max_step`` are bisected, up to
    ``refinements`` rounds.  ``resolved`` is False when the count is still
    non-integer beyond ``tol`` or jumps remain too large.
    """
    s = np.arange(n_points, dtype=float) / n_points
    z = path(s)
    D = np.asarray(evaluate(z), dtype=complex)
    used = 0
    for used in range(refinements + 1):
        steps = np.abs(phase_steps(D))
        bad = np.flatnonzero(steps > max_step)
        if bad.size == 0 or used == refinements:
            break
        s_next = np.roll(s, -1)
        s_next[-1] += 1.0
        mids = 0.5 * (s[bad] + s_next[bad]) % 1.0
        logger.debug("Refining %d contour intervals (round %d)", bad.size, used + 1)
        z_mid = path(mids)
        D_mid = np.asarray(evaluate(z_mid), dtype=complex)
        s = np.concatenate([s, mids])
        z = np.concatenate([z, z_mid])
        D = np.concatenate([D, D_mid])
        order = np.argsort(s, kind="stable")
        s, z, D = s[order], z[order], D[order]

    w = winding_number(D)
    rounded = int(np.rint(w))
    resolved = abs(w - rounded) <= tol and bool(np.all(np.abs(phase_steps(D)) <= max_step))
    if not resolved:
        logger.warning("Winding %.4f not resolved after %d refinements", w, used)
    return WindingResult(w, rounded, resolved, s, z, D, used)



# ─── Contours ─────────────────────────────────────────────────

def half_disk_path(radius: float, offset: float = 0.0, inner: float = 0.0) -> Path:
    """
    Counterclockwise boundary of {Re λ ≥ offset, inner ≤ |λ − offset| ≤ radius}.

    Outer arc (−iR → +iR through +R), down the axis to +i·inner, inner arc
    back through +inner to −i·inner, then down to −iR.  With ``inner`` = 0
    this is the closed half-disk.  Parametrized by arc length on s ∈ [0, 1).
    """
    lengths = np.array([np.pi * radius, radius - inner, np.pi * inner, radius - inner])
    edges = np.concatenate(([0.0], np.cumsum(lengths) / lengths.sum()))

    def path(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float) % 1.0
        seg = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, 3)
        width = np.diff(edges)[seg]
        t = np.where(width > 0, (s - edges[seg]) / np.where(width > 0, width, 1.0), 0.0)
        out = np.empty(s.shape, dtype=complex)
        m = seg == 0
        out[m] = radius * np.exp(1j * np.pi * (t[m] - 0.5))
        m = seg == 1
        out[m] = 1j * (radius - t[m] * (radius - inner))
        m = seg == 2
        out[m] = inner * np.exp(1j * np.pi * (0.5 - t[m]))
        m = seg == 3
        out[m] = -1j * (inner + t[m] * (radius - inner))
        return offset + out

    return path

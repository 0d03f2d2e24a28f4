"""
fitting — Exponent fits on log-log and semi-log data.

Every power-law claim in a report comes out of ``loglog_fit``: a
least-squares slope of log y against log x with a seeded residual
bootstrap confidence interval, so identical inputs give identical CIs.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Any, Iterator

import numpy as np
from scipy import stats

from blayer_verify.configs.constants import BOOTSTRAP_SAMPLES, BOOTSTRAP_SEED

logger = logging.getLogger(__name__)

# shared with sweep worker threads
_seed = [BOOTSTRAP_SEED]


@contextmanager
def bootstrap_seed(seed: int) -> Iterator[None]:
    """Seed every bootstrap CI computed inside the block."""
    previous, _seed[0] = _seed[0], seed
    try:
        yield
    finally:
        _seed[0] = previous


@dataclass(frozen=True)
class FitResult:
    """log y ≈ intercept + slope · log x over the fitted window."""

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int
    window: tuple[float, float]
    unreliable: bool = False

    @property
    def constant(self) -> float:
        return float(np.exp(self.intercept))

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["window"] = list(self.window)
        return out


def _usable(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)


def oscillation_exceeds_trend(log_x: np.ndarray, log_y: np.ndarray, slope: float, intercept: float) -> bool:
    """True when the detrended wiggle is larger than the fitted change over the window."""
    resid = log_y - (intercept + slope * log_x)
    trend = abs(slope) * float(np.ptp(log_x))
    wiggle = float(np.ptp(resid))
    return wiggle > max(trend, 1e-12)


def loglog_fit(
    x,
    y,
    *,
    window: tuple[float, float] | None = None,
    samples: int = BOOTSTRAP_SAMPLES,
    seed: int | None = None,
    level: float = 0.95,
    check_trend: bool = False,
) -> FitResult:
    """
    Slope of log y against log x with a residual-bootstrap CI.

    Parameters
    ----------
    x, y : array_like
        Positive samples; nonpositive or non-finite pairs are dropped.
    window : (lo, hi), optional
        Restrict to lo ≤ x ≤ hi.
    check_trend : bool
        Flag the fit unreliable when oscillations exceed the trend.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = _usable(x, y)
    if window is not None:
        keep &= (x >= window[0]) & (x <= window[1])
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if lx.size < 2 or np.ptp(lx) == 0.0:
        logger.warning("Log-log fit has fewer than two distinct usable points")
        return FitResult(float("nan"), float("nan"), float("nan"), float("nan"), int(lx.size),
                         window or (float("nan"), float("nan")), unreliable=True)

    reg = stats.linregress(lx, ly)
    slope, intercept = float(reg.slope), float(reg.intercept)
    fitted = intercept + slope * lx
    resid = ly - fitted

    rng = np.random.default_rng(_seed[0] if seed is None else seed)
    boot = np.empty(samples)
    for b in range(samples):
        ly_b = fitted + rng.choice(resid, size=resid.size, replace=True)
        boot[b] = np.polyfit(lx, ly_b, 1)[0]
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(boot, [alpha, 1.0 - alpha])

    unreliable = check_trend and oscillation_exceeds_trend(lx, ly, slope, intercept)
    if unreliable:
        logger.warning("Unreliable fit: oscillation exceeds trend (slope %.4g)", slope)
    span = (float(np.exp(lx.min())), float(np.exp(lx.max())))
    return FitResult(slope, intercept, float(lo), float(hi), int(lx.size), window or span, unreliable)


def fit_exponential_rate(x, y) -> tuple[float, float]:
    """Fit y ≈ C e^{−θx}; returns (θ, C)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y) & (y > 0)
    if keep.sum() < 2:
        return float("nan"), float("nan")
    K, log_a = np.polyfit(x[keep], np.log(y[keep]), 1)
    return float(-K), float(np.exp(log_a))


def envelope_constant(bound, measured) -> float:
    """Smallest C with measured ≤ C·bound at every sample (0 when nothing is measured)."""
    bound = np.asarray(bound, dtype=float)
    measured = np.asarray(measured, dtype=float)
    ok = bound > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(measured[ok] / bound[ok], initial=0.0))


def spearman(a, b) -> float:
    """Rank correlation, NaN when either side is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(stats.spearmanr(a, b).statistic)

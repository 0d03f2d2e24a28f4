"""
parallel — Order-preserving map over independent work items.

Frequency sweeps, sphere samples and quadrature nodes are embarrassingly
parallel.  Results come back in input order, so reductions downstream
are deterministic whatever the worker count.
"""

from __future__ import annotations

import logging
from typing import Callable, Iterable, TypeVar

import joblib

from blayer_verify.configs.settings import get_settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Apply ``fn`` to every item, in threads when more than one worker is configured."""
    items = list(items)
    n_jobs = get_settings().workers if workers is None else workers
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Dispatching %d items to %d threads", len(items), n_jobs)
    # numpy/scipy release the GIL in LAPACK and the ODE kernels
    return joblib.Parallel(n_jobs=n_jobs, prefer="threads")(joblib.delayed(fn)(item) for item in items)

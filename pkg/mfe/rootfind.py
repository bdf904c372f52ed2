"""Vectorised root finding for a batch of increasing scalar equations.

Used by both IPFP half-steps: every row of a block solves its own
equation f_i(z) = 0 on the bracket (0, hi_i], with f_i increasing,
f_i(0+) < 0 and f_i(hi_i) >= 0.
"""
from __future__ import annotations

import logging
from concurrent.futures import Executor
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

# f(z) -> (value, derivative), both shaped like z.
BatchFunction = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def solve_increasing(
    func: BatchFunction,
    hi: np.ndarray,
    tol: float,
    *,
    max_iter: int = 200,
) -> tuple[np.ndarray, bool]:
    """Safeguarded Newton-bisection, started at the upper end of the bracket.

    A Newton step that leaves the current bracket is replaced by bisection.
    Rows that meet the tolerance are frozen so later iterations never move them.
    Returns the roots and whether every row met the tolerance.
    """
    hi = np.array(hi, dtype=float, copy=True)
    lo = np.zeros_like(hi)
    z = hi.copy()
    done = np.zeros(hi.shape, dtype=bool)

    for _ in range(max_iter):
        f, df = func(z)
        done |= np.abs(f) <= tol
        # Newton correction below the resolution of z.
        with np.errstate(divide="ignore", invalid="ignore"):
            done |= np.abs(f) <= 4.0 * np.finfo(float).eps * np.abs(df) * np.maximum(z, 1e-300)
        if done.all():
            return z, True

        upper = f > 0
        hi = np.where(upper & ~done, z, hi)
        lo = np.where(~upper & ~done, z, lo)

        with np.errstate(divide="ignore", invalid="ignore"):
            newton = z - f / df
        inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
        step = np.where(inside, newton, 0.5 * (lo + hi))

        # Bracket collapsed to machine precision: nothing left to gain.
        done |= (hi - lo) <= 4.0 * np.finfo(float).eps * np.maximum(hi, 1e-300)
        z = np.where(done, z, step)

    f, _ = func(z)
    ok = bool(np.all((np.abs(f) <= tol) | done))
    if not ok:
        logger.warning("root finder hit %d iterations; worst residual %.3e", max_iter, float(np.max(np.abs(f))))
    return z, ok


def row_blocks(count: int, size: int) -> list[slice]:
    """Fixed partition of `count` rows; serial and threaded runs use the same one."""
    size = max(1, size)
    return [slice(i, min(i + size, count)) for i in range(0, count, size)]


def run_blocks(blocks: list[slice], work: Callable[[slice], bool], pool: Executor | None = None) -> bool:
    if pool is None:
        return all([work(blk) for blk in blocks])
    return all(pool.map(work, blocks))

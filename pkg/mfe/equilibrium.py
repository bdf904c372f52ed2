"""Equilibrium of the accounting system

    n_x = mu_x0 + sum_y M_xy(mu_x0, mu_0y),   m_y = mu_0y + sum_x M_xy(mu_x0, mu_0y)

by IPFP (alternating per-type scalar solves) or damped Newton.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mfe.config import settings
from mfe.errors import SolverError
from mfe.families.base import BoundFamily, MatchingFamily
from mfe.models import SolverOptions
from mfe.rootfind import row_blocks, run_blocks, solve_increasing
from mfe.types import Market, Matching

logger = logging.getLogger(__name__)

MAX_HALVINGS = 50


@dataclass(frozen=True)
class EquilibriumSolution:
    matching: Matching
    outer_iterations: int
    # Sup-norm of the accounting residual in the units the solver worked in:
    # divided by sum(n) + sum(m) for degree-1 homogeneous families, raw otherwise.
    residual_sup_norm: float
    converged: bool
    method: str = "ipfp"

    @property
    def unmatched(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.matching.mu_x0), np.asarray(self.matching.mu_0y)


def _accounting(bound: BoundFamily, n: np.ndarray, m: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = bound.value(a, b)
    return np.concatenate([n - a - mu.sum(axis=1), m - b - mu.sum(axis=0)])


def delta_matrix(m_a: np.ndarray, m_b: np.ndarray) -> np.ndarray:
    """Blockwise Jacobian of the accounting map from the cell partials dM/da, dM/db."""
    return np.block([
        [np.diag(1.0 + m_a.sum(axis=1)), m_b],
        [m_a.T, np.diag(1.0 + m_b.sum(axis=0))],
    ])


def residuals(family: MatchingFamily, theta, market: Market, mu_x0: np.ndarray, mu_0y: np.ndarray) -> np.ndarray:
    return _accounting(family.bind(theta), market.n, market.m, np.asarray(mu_x0, float), np.asarray(mu_0y, float))


def system_jacobian(family: MatchingFamily, theta, mu_x0: np.ndarray, mu_0y: np.ndarray) -> np.ndarray:
    m_a, m_b = family.bind(theta).grad_unmatched(np.asarray(mu_x0, float), np.asarray(mu_0y, float))
    return delta_matrix(m_a, m_b)


def _scale(family: MatchingFamily, market: Market) -> float:
    return market.total if family.descriptor.homogeneous_degree_one else 1.0


def _half_step_x(bound, b, n, tol, pool) -> np.ndarray:
    a = np.empty_like(n)

    def work(rows: slice) -> bool:
        target = n[rows]

        def f(z):
            ld = bound.log_derivatives(z, b, rows=rows, params=False)
            mu = ld.mass()
            return z + mu.sum(axis=1) - target, 1.0 + (mu * ld.l_s).sum(axis=1) / z

        a[rows], ok = solve_increasing(f, target, tol)
        return ok

    if not run_blocks(row_blocks(n.size, settings.block_rows), work, pool):
        raise SolverError("row solve failed to bracket the margin equation")
    return a


def _half_step_y(bound, a, m, tol, pool) -> np.ndarray:
    b = np.empty_like(m)

    def work(cols: slice) -> bool:
        target = m[cols]

        def f(z):
            ld = bound.log_derivatives(a, z, cols=cols, params=False)
            mu = ld.mass()
            return z + mu.sum(axis=0) - target, 1.0 + (mu * ld.l_t).sum(axis=0) / z

        b[cols], ok = solve_increasing(f, target, tol)
        return ok

    if not run_blocks(row_blocks(m.size, settings.block_rows), work, pool):
        raise SolverError("column solve failed to bracket the margin equation")
    return b


def _start(init, k: float, n: np.ndarray, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if init is None:
        return n.copy(), m.copy()
    a0 = np.clip(np.asarray(init[0], dtype=float) / k, 1e-300, n)
    b0 = np.clip(np.asarray(init[1], dtype=float) / k, 1e-300, m)
    return a0, b0


def _solution(bound, market, a, b, k, iterations, residual, converged, method) -> EquilibriumSolution:
    mu = bound.value(a, b)
    matching = Matching(market.space, mu * k, a * k, b * k)
    if not converged:
        logger.warning("%s did not converge after %d iterations (residual %.3e)", method, iterations, residual)
    return EquilibriumSolution(matching, iterations, residual, converged, method)


def solve_ipfp(
    family: MatchingFamily,
    theta,
    market: Market,
    opts: SolverOptions | None = None,
    *,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> EquilibriumSolution:
    opts = opts or SolverOptions()
    bound = family.bind(theta)
    k = _scale(family, market)
    scaled = market.rescaled(k)
    n, m = scaled.n, scaled.m
    _, b = _start(init, k, n, m)
    inner = opts.effective_inner_tol

    pool = ThreadPoolExecutor(max_workers=settings.threads) if opts.parallel else None
    try:
        a = n.copy()
        residual = np.inf
        converged = False
        iteration = 0
        for iteration in range(1, opts.max_outer_iter + 1):
            a = _half_step_x(bound, b, n, inner, pool)
            b_next = _half_step_y(bound, a, m, inner, pool)
            moved = float(np.max(np.abs(b_next - b)))
            b = b_next
            residual = float(np.max(np.abs(_accounting(bound, n, m, a, b))))
            logger.debug("ipfp iteration %d: movement %.3e residual %.3e", iteration, moved, residual)
            if moved < opts.tol and residual <= opts.tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()

    return _solution(bound, market, a, b, k, iteration, residual, converged, "ipfp")


def solve_newton(
    family: MatchingFamily,
    theta,
    market: Market,
    opts: SolverOptions | None = None,
    *,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> EquilibriumSolution:
    opts = opts or SolverOptions(method="newton")
    bound = family.bind(theta)
    k = _scale(family, market)
    scaled = market.rescaled(k)
    n, m = scaled.n, scaled.m
    a, b = _start(init, k, n, m)
    nx = n.size

    r = _accounting(bound, n, m, a, b)
    norm = float(np.max(np.abs(r)))
    converged = norm <= opts.tol
    iteration = 0
    while not converged and iteration < opts.max_outer_iter:
        iteration += 1
        m_a, m_b = bound.grad_unmatched(a, b)
        try:
            step_dir = scipy.linalg.solve(delta_matrix(m_a, m_b), r)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"singular accounting Jacobian at iteration {iteration}") from exc

        step = 1.0
        for _ in range(MAX_HALVINGS):
            a_try = a + step * step_dir[:nx]
            b_try = b + step * step_dir[nx:]
            if np.all(a_try > 0) and np.all(b_try > 0):
                r_try = _accounting(bound, n, m, a_try, b_try)
                norm_try = float(np.max(np.abs(r_try)))
                if norm_try <= norm:
                    break
            step *= 0.5
        else:
            logger.warning("newton line search exhausted %d halvings", MAX_HALVINGS)
            break

        a, b, r, norm = a_try, b_try, r_try, norm_try
        logger.debug("newton iteration %d: step %.3g residual %.3e", iteration, step, norm)
        converged = norm <= opts.tol

    return _solution(bound, market, a, b, k, iteration, norm, converged, "newton")


def solve(
    family: MatchingFamily,
    theta,
    market: Market,
    opts: SolverOptions | None = None,
    *,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> EquilibriumSolution:
    opts = opts or SolverOptions()
    if opts.method == "newton":
        return solve_newton(family, theta, market, opts, init=init)
    return solve_ipfp(family, theta, market, opts, init=init)

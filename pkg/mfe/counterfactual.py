"""Counterfactual equilibria under shifted margins (n', m') with theta held fixed.

The parametric route re-solves the equilibrium at the fitted theta. The
parameter-free route rewrites the accounting system in ratios z~ = z'/z:

    n~_x = p_x0 mu~_x0 + sum_y p_xy g(mu~_x0, mu~_0y)
    m~_y = q_0y mu~_0y + sum_x q_xy g(mu~_x0, mu~_0y)

with p = mu*/n, q = mu*/m from the baseline, and solves it by a revised IPFP.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from mfe.config import settings
from mfe.equilibrium import EquilibriumSolution, solve_ipfp
from mfe.errors import DomainError, SolverError
from mfe.estimation.likelihood import ObservedData
from mfe.families.base import MatchingFamily
from mfe.models import CounterfactualMethod, SolverOptions
from mfe.rootfind import row_blocks, run_blocks, solve_increasing
from mfe.types import Market, Matching, TypeSpace

logger = logging.getLogger(__name__)

ResultMethod = Literal["parametric", "parameter_free"]


@dataclass(frozen=True)
class CounterfactualRatios:
    mu_xy: np.ndarray
    mu_x0: np.ndarray
    mu_0y: np.ndarray
    n: np.ndarray
    m: np.ndarray


@dataclass(frozen=True)
class CounterfactualResult:
    ratios: CounterfactualRatios
    new_matching: Matching
    baseline: Matching
    method: ResultMethod
    iterations: int
    converged: bool


def _baseline_matching(baseline: Matching | EquilibriumSolution | ObservedData) -> Matching:
    if isinstance(baseline, EquilibriumSolution):
        return baseline.matching
    if isinstance(baseline, ObservedData):
        return baseline.matching
    return baseline


def _check_space(baseline: TypeSpace, new_market: Market) -> None:
    if baseline != new_market.space:
        raise DomainError("counterfactual margins are defined on a different type space than the baseline")


def _cell_ratio(new: np.ndarray, old: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(old > 0, new / np.where(old > 0, old, 1.0), 0.0)


def _ratios(baseline: Matching, new: Matching) -> CounterfactualRatios:
    n, m = baseline.margins()
    n_new, m_new = new.margins()
    return CounterfactualRatios(
        _cell_ratio(new.mu_xy, baseline.mu_xy),
        _cell_ratio(new.mu_x0, baseline.mu_x0),
        _cell_ratio(new.mu_0y, baseline.mu_0y),
        n_new / n,
        m_new / m,
    )


def counterfactual_parametric(
    family: MatchingFamily,
    theta_hat,
    new_market: Market,
    opts: SolverOptions | None = None,
    *,
    baseline_market: Market,
) -> CounterfactualResult:
    """Equilibrium at (theta_hat, n', m'); ratios are taken against the equilibrium at (theta_hat, n, m)."""
    _check_space(baseline_market.space, new_market)
    base = solve_ipfp(family, theta_hat, baseline_market, opts)
    new = solve_ipfp(family, theta_hat, new_market, opts, init=base.unmatched)
    return CounterfactualResult(
        ratios=_ratios(base.matching, new.matching),
        new_matching=new.matching,
        baseline=base.matching,
        method="parametric",
        iterations=new.outer_iterations,
        converged=base.converged and new.converged,
    )


def counterfactual_parameter_free(
    baseline: Matching | EquilibriumSolution | ObservedData,
    new_market: Market,
    ratio_form: MatchingFamily,
    opts: SolverOptions | None = None,
    *,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> CounterfactualResult:
    """Ratio IPFP; `init` gives starting singles ratios (mu~_x0, mu~_0y), of which only mu~_0y is used."""
    opts = opts or SolverOptions()
    base = _baseline_matching(baseline)
    _check_space(base.space, new_market)
    if np.any(base.mu_x0 <= 0) or np.any(base.mu_0y <= 0):
        raise DomainError("baseline singles must be strictly positive for the ratio system")
    exp_a, exp_b = ratio_form.ratio_exponents()

    n, m = base.margins()
    live = (base.mu_xy > 0) & ratio_form.allowed
    p_x0, q_0y = base.mu_x0 / n, base.mu_0y / m
    p_xy = np.where(live, base.mu_xy / n[:, None], 0.0)
    q_xy = np.where(live, base.mu_xy / m[None, :], 0.0)
    n_ratio, m_ratio = new_market.n / n, new_market.m / m

    # r is overwritten by the first half-step.
    r = n_ratio / p_x0
    c = m_ratio / q_0y
    if init is not None:
        c = np.asarray(init[1], dtype=float).copy()
        if c.shape != m_ratio.shape or not np.all(np.isfinite(c) & (c > 0)):
            raise DomainError("starting ratios must be positive and match the women types")
    inner = opts.effective_inner_tol

    def solve_r(c_fixed: np.ndarray, pool) -> np.ndarray:
        out = np.empty_like(r)
        cb = c_fixed[None, :] ** exp_b

        def work(rows: slice) -> bool:
            ea, pr, cbr = exp_a[rows], p_xy[rows], cb[rows]

            def f(z):
                g = z[:, None] ** ea * cbr
                value = p_x0[rows] * z + (pr * g).sum(axis=1) - n_ratio[rows]
                slope = p_x0[rows] + (pr * ea * g).sum(axis=1) / z
                return value, slope

            out[rows], ok = solve_increasing(f, n_ratio[rows] / p_x0[rows], inner)
            return ok

        if not run_blocks(row_blocks(r.size, settings.block_rows), work, pool):
            raise SolverError("ratio row solve failed")
        return out

    def solve_c(r_fixed: np.ndarray, pool) -> np.ndarray:
        out = np.empty_like(c)
        ra = r_fixed[:, None] ** exp_a

        def work(cols: slice) -> bool:
            eb, qc, rac = exp_b[:, cols], q_xy[:, cols], ra[:, cols]

            def f(z):
                g = rac * z[None, :] ** eb
                value = q_0y[cols] * z + (qc * g).sum(axis=0) - m_ratio[cols]
                slope = q_0y[cols] + (qc * eb * g).sum(axis=0) / z
                return value, slope

            out[cols], ok = solve_increasing(f, m_ratio[cols] / q_0y[cols], inner)
            return ok

        if not run_blocks(row_blocks(c.size, settings.block_rows), work, pool):
            raise SolverError("ratio column solve failed")
        return out

    pool = ThreadPoolExecutor(max_workers=settings.threads) if opts.parallel else None
    converged = False
    iteration = 0
    try:
        for iteration in range(1, opts.max_outer_iter + 1):
            r = solve_r(c, pool)
            c_next = solve_c(r, pool)
            moved = float(np.max(np.abs(c_next - c)))
            c = c_next
            logger.debug("ratio ipfp iteration %d: movement %.3e", iteration, moved)
            if moved < opts.tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if not converged:
        logger.warning("ratio ipfp did not converge after %d iterations", iteration)

    g = np.where(live, r[:, None] ** exp_a * c[None, :] ** exp_b, 0.0)
    new_matching = Matching(base.space, g * base.mu_xy, r * base.mu_x0, c * base.mu_0y)
    ratios = CounterfactualRatios(g, r, c, n_ratio, m_ratio)
    return CounterfactualResult(ratios, new_matching, base, "parameter_free", iteration, converged)


def counterfactual(
    method: CounterfactualMethod,
    family: MatchingFamily,
    theta,
    baseline: Matching,
    new_market: Market,
    opts: SolverOptions | None = None,
) -> CounterfactualResult:
    if method == "parameter-free":
        return counterfactual_parameter_free(baseline, new_market, family, opts)
    return counterfactual_parametric(family, theta, new_market, opts, baseline_market=baseline.market())


def summary_by_cell(result: CounterfactualResult) -> list[dict[str, object]]:
    """Per-household-type baseline mass, counterfactual mass and change."""
    space = result.baseline.space
    before = result.baseline.to_vector()
    after = result.new_matching.to_vector()
    rows = []
    for (x, y), b, a in zip(space.household_labels(), before, after):
        rows.append({"x": x, "y": y, "baseline": float(b), "counterfactual": float(a), "change": float(a - b)})
    return rows

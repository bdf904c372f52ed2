"""Benchmark harness on the exponentially transferable utility design.

Types x, y are drawn U(0, 1) with |Y| = round(1.5 |X|), alpha_xy = theta_a x y,
gamma_xy = theta_g x y, tau = 1 and n_x = m_y = 1. The random stream of
replication r at size s is SeedSequence([seed, s]).spawn(replications)[r].
"""
from __future__ import annotations

import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from mfe.config import settings
from mfe.equilibrium import solve_ipfp, solve_newton
from mfe.estimation.likelihood import ObservedData
from mfe.estimation.mpec import fit_mpec
from mfe.estimation.nested import fit_nested
from mfe.families.design import SurplusDesign
from mfe.families.etu import EtuGkw
from mfe.models import BenchmarkReport, BenchmarkRow, FitMethod, SolverOptions
from mfe.types import Market, TypeSpace

logger = logging.getLogger(__name__)

SYSTEM_THETA = (1.0, 1.0)
ESTIMATION_THETA = (0.5, 0.3)
START_SPREAD = 0.25
RECOVERY_TOL = 1e-3
AGREEMENT_TOL = 1e-8


@dataclass(frozen=True)
class Trial:
    iterations: int
    seconds: float
    failed: bool
    agrees: bool | None = None


def etu_instance(size: int, rng: np.random.Generator) -> tuple[EtuGkw, Market]:
    ny = int(round(1.5 * size))
    x = rng.uniform(0.0, 1.0, size)
    y = rng.uniform(0.0, 1.0, ny)
    space = TypeSpace.of_size(size, ny)
    family = EtuGkw(space, 1.0, SurplusDesign.interaction(x, y, "alpha"), SurplusDesign.interaction(x, y, "gamma"))
    return family, Market(space, np.ones(size), np.ones(ny))


def _streams(seed: int, size: int, replications: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence([seed, size]).spawn(replications)]


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def _fan_out(work, items):
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        return list(pool.map(work, items))


def _rows(size: int, trials: dict[str, list[Trial]]) -> list[BenchmarkRow]:
    rows = []
    for method, runs in trials.items():
        times = [t.seconds for t in runs]
        agreement = None
        if any(t.agrees is not None for t in runs):
            agreement = all(t.agrees for t in runs if t.agrees is not None)
        rows.append(BenchmarkRow(
            size=size,
            method=method,
            replications=len(runs),
            iterations_mean=statistics.fmean(t.iterations for t in runs),
            time_mean=statistics.fmean(times),
            time_std=statistics.pstdev(times) if len(times) > 1 else 0.0,
            failure_rate=100.0 * sum(t.failed for t in runs) / len(runs),
            agreement=agreement,
        ))
    return rows


def _system_replication(size: int, rng: np.random.Generator, opts: SolverOptions) -> dict[str, Trial]:
    family, market = etu_instance(size, rng)
    serial, t_serial = _timed(solve_ipfp, family, SYSTEM_THETA, market, opts)
    parallel, t_parallel = _timed(solve_ipfp, family, SYSTEM_THETA, market, opts.model_copy(update={"parallel": True}))
    newton, t_newton = _timed(solve_newton, family, SYSTEM_THETA, market, opts.model_copy(update={"method": "newton"}))

    identical = bool(np.array_equal(serial.matching.to_vector(), parallel.matching.to_vector()))
    # Compared on the frequency scale both solvers stop on.
    gap = float(np.max(np.abs(serial.matching.to_vector() - newton.matching.to_vector()))) / market.total
    return {
        "ipfp": Trial(serial.outer_iterations, t_serial, not serial.converged),
        "ipfp-parallel": Trial(parallel.outer_iterations, t_parallel, not parallel.converged, identical),
        "newton": Trial(newton.outer_iterations, t_newton, not newton.converged, gap <= AGREEMENT_TOL),
    }


def run_benchmark_system(
    sizes: Sequence[int],
    replications: int,
    seed: int,
    opts: SolverOptions | None = None,
) -> BenchmarkReport:
    opts = opts or SolverOptions()
    report = BenchmarkReport(kind="system", seed=seed)
    for size in sizes:
        logger.info("system benchmark: size %d, %d replications", size, replications)
        runs = _fan_out(lambda rng: _system_replication(size, rng, opts), _streams(seed, size, replications))
        report.rows.extend(_rows(size, {k: [r[k] for r in runs] for k in runs[0]}))
    return report


def _estimation_replication(
    size: int,
    rng: np.random.Generator,
    opts: SolverOptions,
    methods: Sequence[FitMethod],
    start: Literal["perturbed", "truth"],
) -> dict[str, Trial]:
    family, market = etu_instance(size, rng)
    truth = np.array(ESTIMATION_THETA)
    observed = ObservedData(solve_ipfp(family, truth, market, opts).matching)
    theta_init = truth + rng.uniform(-START_SPREAD, START_SPREAD, truth.size) if start == "perturbed" else truth

    fitters = {"nested": fit_nested, "mpec": fit_mpec}
    out = {}
    for method in methods:
        result, seconds = _timed(fitters[method], family, observed, theta_init, opts)
        error = float(np.max(np.abs(result.theta_hat.values - truth)))
        failed = not result.converged or not np.isfinite(error) or error > RECOVERY_TOL
        out[method] = Trial(result.iterations, seconds, failed)
    return out


def run_benchmark_estimation(
    sizes: Sequence[int],
    replications: int,
    seed: int,
    opts: SolverOptions | None = None,
    *,
    methods: Sequence[FitMethod] = ("nested", "mpec"),
    start: Literal["perturbed", "truth"] = "perturbed",
) -> BenchmarkReport:
    opts = opts or SolverOptions()
    report = BenchmarkReport(kind="estimation", seed=seed)
    for size in sizes:
        logger.info("estimation benchmark: size %d, %d replications", size, replications)
        runs = _fan_out(
            lambda rng: _estimation_replication(size, rng, opts, methods, start),
            _streams(seed, size, replications),
        )
        report.rows.extend(_rows(size, {k: [r[k] for r in runs] for k in methods}))
    return report

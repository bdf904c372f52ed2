from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

from mfe.bench import run_benchmark_estimation, run_benchmark_system
from mfe.counterfactual import counterfactual_parameter_free, counterfactual_parametric
from mfe.equilibrium import solve
from mfe.errors import CapabilityError, NonConvergenceError
from mfe.estimation import covariance_homogeneous, fit, fit_nested, surplus_nonparametric_cs
from mfe.estimation.likelihood import ObservedData
from mfe.families import ChooSiow, MatchingFamily, build_family, initial_theta
from mfe.io import load_margins_csv, load_matching_csv, save_result_json, to_record
from mfe.models import RunConfig
from mfe.types import ParamVector

logger = logging.getLogger(__name__)


def _theta(family: MatchingFamily, config: RunConfig) -> ParamVector:
    if config.theta_init is not None:
        return family.params(config.theta_init)
    return initial_theta(family, config.family)


def _parametric_fit(family: MatchingFamily, observed: ObservedData, config: RunConfig) -> tuple[MatchingFamily, ParamVector]:
    """A free-surplus logit TU model is exactly identified, so its fit is the direct inversion."""
    if isinstance(family, ChooSiow) and family.design.kind == "free" and config.theta_init is None:
        return ChooSiow.from_surplus(surplus_nonparametric_cs(observed))
    result = fit_nested(family, observed, _theta(family, config), config.solver)
    if not result.converged:
        raise NonConvergenceError(f"estimation did not converge: {result.message}")
    return family, result.theta_hat


def _solve(config: RunConfig, observed: ObservedData, family: MatchingFamily) -> Any:
    return solve(family, _theta(family, config), observed.market, config.solver)


def _fit(config: RunConfig, observed: ObservedData, family: MatchingFamily) -> Any:
    return fit(family, observed, _theta(family, config), config.solver, config.fit_method)


def _ci(config: RunConfig, observed: ObservedData, family: MatchingFamily) -> Any:
    if not family.descriptor.homogeneous_degree_one:
        raise CapabilityError(f"confidence intervals need a degree-1 homogeneous family; '{family.name}' is not")
    result = _fit(config, observed, family)
    if not result.converged:
        return result
    cov, std = covariance_homogeneous(family, result.theta_hat, observed, config.solver)
    return result.with_covariance(cov, std)


def _counterfactual(config: RunConfig, observed: ObservedData, family: MatchingFamily) -> Any:
    new_market = load_margins_csv(config.new_margins, observed.space)
    if config.counterfactual_method == "parameter-free":
        return counterfactual_parameter_free(observed, new_market, family, config.solver)
    fitted, theta = _parametric_fit(family, observed, config)
    return counterfactual_parametric(fitted, theta, new_market, config.solver, baseline_market=observed.market)


def _surplus(config: RunConfig, observed: ObservedData, family: MatchingFamily) -> Any:
    return surplus_nonparametric_cs(observed)


COMMANDS = {
    "solve": _solve,
    "fit": _fit,
    "ci": _ci,
    "counterfactual": _counterfactual,
    "surplus": _surplus,
}


def execute(config: RunConfig) -> dict[str, Any]:
    """Run one command and return its JSON record; non-convergence raises NonConvergenceError."""
    if config.command == "simulate":
        runner = run_benchmark_system if config.benchmark == "system" else run_benchmark_estimation
        result = runner(config.sizes, config.replications, config.seed, config.solver)
    else:
        observed = load_matching_csv(config.matching)
        family = build_family(config.family, observed.space)
        logger.info("%s with family %s on %dx%d types", config.command, family.name, *observed.space.shape)
        result = COMMANDS[config.command](config, observed, family)

    record = to_record(result)
    if record.get("converged") is False:
        raise NonConvergenceError(f"{config.command} did not converge")

    if config.out:
        save_result_json(record, config.out)
        logger.info("wrote %s", Path(config.out).resolve())
    return record

"""Nested maximum likelihood: re-solve the equilibrium at every theta, BFGS on the analytic gradient."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from mfe.errors import MfeError
from mfe.estimation.likelihood import ObservedData, loglik_value_and_gradient
from mfe.families.base import MatchingFamily, as_theta
from mfe.models import SolverOptions
from mfe.types import ParamVector

logger = logging.getLogger(__name__)

# Convergence is judged on the per-household (frequency) scale.
GRADIENT_TOL = 1e-6


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: ParamVector
    loglik: float
    gradient_norm: float
    iterations: int
    converged: bool
    method: str = "nested"
    message: str = ""
    covariance: np.ndarray | None = None
    std_errors: np.ndarray | None = None

    def with_covariance(self, covariance: np.ndarray, std_errors: np.ndarray) -> "EstimationResult":
        return replace(self, covariance=covariance, std_errors=std_errors)


class _NestedObjective:
    """-loglik / N^ with its gradient; caches the last point and warm-starts the equilibrium."""

    def __init__(self, family: MatchingFamily, observed: ObservedData, opts: SolverOptions) -> None:
        self.family = family
        self.observed = observed
        self.opts = opts
        self.households = observed.households
        self.init: tuple[np.ndarray, np.ndarray] | None = None
        self._cache: dict[bytes, tuple[float, np.ndarray, float]] = {}
        self.evaluations = 0

    def evaluate(self, theta: np.ndarray) -> tuple[float, np.ndarray, float]:
        key = np.asarray(theta, dtype=float).tobytes()
        if key in self._cache:
            return self._cache[key]
        self.evaluations += 1
        try:
            value, grad, solution = loglik_value_and_gradient(self.family, theta, self.observed, self.opts, init=self.init)
        except MfeError as exc:
            logger.debug("objective undefined at %s: %s", theta, exc)
            out = (np.inf, np.zeros_like(theta), -np.inf)
        else:
            if np.isfinite(value):
                self.init = solution.unmatched
                out = (-value / self.households, -grad / self.households, value)
            else:
                out = (np.inf, np.zeros_like(theta), value)
        self._cache = {key: out}
        return out

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        f, g, _ = self.evaluate(theta)
        return f, g


def fit_nested(
    family: MatchingFamily,
    observed: ObservedData,
    theta_init,
    opts: SolverOptions | None = None,
    *,
    max_iter: int = 500,
) -> EstimationResult:
    opts = opts or SolverOptions()
    x0 = np.array(as_theta(theta_init), dtype=float)
    family.validate_theta(x0)
    objective = _NestedObjective(family, observed, opts)

    result = minimize(objective, x0, jac=True, method="BFGS", options={"gtol": 1e-9, "maxiter": max_iter})
    theta_hat = np.asarray(result.x, dtype=float)
    _, grad, loglik = objective.evaluate(theta_hat)
    gradient_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
    converged = bool(np.isfinite(loglik) and gradient_norm <= GRADIENT_TOL)
    if not converged:
        logger.warning("nested fit stopped without convergence: %s (|g|=%.3e)", result.message, gradient_norm)
    else:
        logger.info("nested fit converged in %d iterations, loglik %.6f", result.nit, loglik)
    return EstimationResult(
        theta_hat=family.params(theta_hat),
        loglik=float(loglik),
        gradient_norm=gradient_norm,
        iterations=int(result.nit),
        converged=converged,
        method="nested",
        message=str(result.message),
    )


"""Model-predicted household frequencies, the log-likelihood and its analytic gradient."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mfe.equilibrium import EquilibriumSolution, delta_matrix, solve_ipfp
from mfe.errors import SolverError
from mfe.families.base import MatchingFamily
from mfe.models import SolverOptions
from mfe.types import HouseholdFrequencies, Market, Matching, normalize_to_frequencies

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservedData:
    """An observed matching; the margins n^, m^ are always derived from it."""

    matching: Matching

    @property
    def space(self):
        return self.matching.space

    @property
    def market(self) -> Market:
        return self.matching.market()

    @property
    def households(self) -> float:
        return self.matching.total

    @property
    def frequencies(self) -> HouseholdFrequencies:
        return normalize_to_frequencies(self.matching)[0]

    @property
    def counts(self) -> np.ndarray:
        return self.matching.to_vector()


@dataclass(frozen=True)
class EquilibriumSensitivity:
    """Derivatives of the household mass vector at an equilibrium.

    d_theta is (K, H): margins held fixed. d_margins is (H, |X|+|Y|): theta held fixed.
    """

    mu: np.ndarray
    d_theta: np.ndarray
    d_margins: np.ndarray | None = None


def predicted_frequencies(
    family: MatchingFamily,
    theta,
    market: Market,
    opts: SolverOptions | None = None,
) -> HouseholdFrequencies:
    solution = solve_ipfp(family, theta, market, opts)
    return normalize_to_frequencies(solution.matching)[0]


def log_likelihood(observed: ObservedData, pi: HouseholdFrequencies) -> float:
    counts = observed.counts
    seen = counts > 0
    if np.any(pi.pi[seen] <= 0):
        return float("-inf")
    return float(np.sum(counts[seen] * np.log(pi.pi[seen])))


def equilibrium_sensitivity(
    family: MatchingFamily,
    theta,
    solution: EquilibriumSolution,
    *,
    margins: bool = False,
) -> EquilibriumSensitivity:
    """Implicit-function derivatives of (mu_xy, mu_x0, mu_0y) at the equilibrium."""
    bound = family.bind(theta)
    a, b = solution.unmatched
    ld = bound.log_derivatives(a, b, params=True)
    mass = ld.mass()
    m_a = np.where(ld.allowed, mass * ld.l_s / a[:, None], 0.0)
    m_b = np.where(ld.allowed, mass * ld.l_t / b[None, :], 0.0)
    m_theta = np.where(ld.allowed, mass * ld.l_theta, 0.0)
    nx, ny = mass.shape

    delta = delta_matrix(m_a, m_b)
    rhs = -np.concatenate([m_theta.sum(axis=2), m_theta.sum(axis=1)], axis=1).T
    try:
        lu = scipy.linalg.lu_factor(delta)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolverError("accounting Jacobian is singular") from exc
    d_ab = scipy.linalg.lu_solve(lu, rhs)
    da, db = d_ab[:nx].T, d_ab[nx:].T

    d_cells = m_a[None] * da[:, :, None] + m_b[None] * db[:, None, :] + m_theta
    d_theta = np.concatenate([d_cells.reshape(d_cells.shape[0], -1), da, db], axis=1)
    mu = np.concatenate([mass.ravel(), a, b])

    d_margins = None
    if margins:
        # d(household masses)/d(a, b), then chain through delta^{-1}.
        p = np.zeros((mu.size, nx + ny))
        rows = np.arange(nx * ny).reshape(nx, ny)
        p[rows, np.arange(nx)[:, None]] = m_a
        p[rows, nx + np.arange(ny)[None, :]] = m_b
        p[nx * ny:, :] = np.eye(nx + ny)
        d_margins = p @ scipy.linalg.lu_solve(lu, np.eye(nx + ny))
    return EquilibriumSensitivity(mu, d_theta, d_margins)


def log_frequency_jacobian(sens: EquilibriumSensitivity) -> tuple[np.ndarray, np.ndarray]:
    """(pi, D_theta log Pi) with D_theta log Pi of shape (H, K); rows with pi = 0 are zero."""
    total = sens.mu.sum()
    pi = sens.mu / total
    d_log = np.zeros((sens.mu.size, sens.d_theta.shape[0]))
    live = sens.mu > 0
    d_log[live] = (sens.d_theta[:, live] / sens.mu[live]).T - sens.d_theta.sum(axis=1) / total
    return pi, d_log


def _gradient(counts: np.ndarray, sens: EquilibriumSensitivity) -> np.ndarray:
    seen = counts > 0
    total = sens.mu.sum()
    direct = sens.d_theta[:, seen] @ (counts[seen] / sens.mu[seen])
    return direct - counts.sum() * sens.d_theta.sum(axis=1) / total


def loglik_value_and_gradient(
    family: MatchingFamily,
    theta,
    observed: ObservedData,
    opts: SolverOptions | None = None,
    *,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, np.ndarray, EquilibriumSolution]:
    solution = solve_ipfp(family, theta, observed.market, opts, init=init)
    if not solution.converged:
        logger.warning("equilibrium not converged at theta=%s", np.asarray(family.bind(theta).theta))
    pi, _ = normalize_to_frequencies(solution.matching)
    value = log_likelihood(observed, pi)
    if not np.isfinite(value):
        return value, np.zeros(family.theta_dim), solution
    sens = equilibrium_sensitivity(family, theta, solution)
    return value, _gradient(observed.counts, sens), solution


def loglik_gradient(
    family: MatchingFamily,
    theta,
    observed: ObservedData,
    opts: SolverOptions | None = None,
) -> np.ndarray:
    return loglik_value_and_gradient(family, theta, observed, opts)[1]


def information_matrix(family: MatchingFamily, theta, market: Market, opts: SolverOptions | None = None) -> np.ndarray:
    """Per-household Fisher information J' diag(pi) J with J = D_theta log Pi."""
    solution = solve_ipfp(family, theta, market, opts)
    pi, jac = log_frequency_jacobian(equilibrium_sensitivity(family, theta, solution))
    return jac.T @ (pi[:, None] * jac)


def simulate_observed(
    family: MatchingFamily,
    theta,
    market: Market,
    households: int,
    rng: np.random.Generator,
    opts: SolverOptions | None = None,
) -> ObservedData:
    """Draw `households` households from the model frequencies at (theta, market)."""
    pi = predicted_frequencies(family, theta, market, opts)
    probs = pi.pi / pi.pi.sum()
    counts = rng.multinomial(households, probs).astype(float)
    return ObservedData(Matching.from_vector(market.space, counts))

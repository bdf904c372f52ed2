"""Asymptotic covariance of the maximum-likelihood estimate for degree-1 homogeneous families.

The estimate solves J(theta, A pi^)' pi^ = 0 with J = D_theta log Pi, where the
margins zeta = A pi^ are themselves estimated. A delta-method expansion gives

    V = I^{-1} B V_pi B' I^{-1},  B = J' (Id - D_zeta Pi A),  I = J' diag(pi) J,
    V_pi = diag(pi) - pi pi',

and std errors sqrt(diag(V) / N^h).
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
import scipy.linalg

from mfe.equilibrium import solve_ipfp
from mfe.errors import CapabilityError, RankDeficiencyError, format_null_direction
from mfe.estimation.likelihood import ObservedData, equilibrium_sensitivity, log_frequency_jacobian
from mfe.families.base import MatchingFamily, as_theta
from mfe.models import SolverOptions
from mfe.types import Market, aggregate_margins, margin_matrix

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-12


def _inverse_information(info: np.ndarray, names: Sequence[str]) -> np.ndarray:
    eigval, eigvec = scipy.linalg.eigh(info)
    top = float(np.max(np.abs(eigval))) if eigval.size else 0.0
    if eigval.size and eigval[0] <= EIGEN_FLOOR * max(top, 1.0):
        direction = format_null_direction(names, eigvec[:, 0])
        raise RankDeficiencyError(
            f"information matrix is rank deficient (smallest eigenvalue {eigval[0]:.3e})", direction
        )
    return (eigvec / eigval) @ eigvec.T


def sandwich_covariance(
    jac_log: np.ndarray,
    d_zeta: np.ndarray,
    a_matrix: np.ndarray,
    pi: np.ndarray,
    names: Sequence[str],
) -> np.ndarray:
    """V from J = D_theta log Pi (H x K), D_zeta Pi (H x |X|+|Y|), A and the model pi."""
    info = jac_log.T @ (pi[:, None] * jac_log)
    info_inv = _inverse_information(info, names)
    b = jac_log.T @ (np.eye(pi.size) - d_zeta @ a_matrix)
    v_pi = np.diag(pi) - np.outer(pi, pi)
    cov = info_inv @ b @ v_pi @ b.T @ info_inv
    return 0.5 * (cov + cov.T)


def covariance_homogeneous(
    family: MatchingFamily,
    theta_hat,
    observed: ObservedData,
    opts: SolverOptions | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    if not family.descriptor.homogeneous_degree_one:
        raise CapabilityError(f"standard errors need a degree-1 homogeneous family; '{family.name}' is not")
    theta = as_theta(theta_hat)
    space = observed.space
    freq = observed.frequencies
    zeta = aggregate_margins(freq)
    market = Market(space, zeta[: space.nx], zeta[space.nx:])

    solution = solve_ipfp(family, theta, market, opts)
    if not solution.converged:
        logger.warning("equilibrium at theta_hat did not converge; covariance may be inaccurate")
    sens = equilibrium_sensitivity(family, theta, solution, margins=True)
    pi, jac_log = log_frequency_jacobian(sens)

    total = sens.mu.sum()
    d_zeta = (sens.d_margins - np.outer(pi, sens.d_margins.sum(axis=0))) / total

    cov = sandwich_covariance(jac_log, d_zeta, margin_matrix(space), pi, family.param_names())
    std_errors = np.sqrt(np.clip(np.diag(cov), 0.0, None) / observed.households)
    return cov, std_errors

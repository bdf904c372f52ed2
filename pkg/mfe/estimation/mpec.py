"""MPEC estimation: Newton on the first-order conditions of the Lagrangian

    L(theta, u, v, lambda) = lbar(theta, u, v) + lambda' G(theta, u, v)

with u = -log mu_x0, v = -log mu_0y, lbar the per-household log-likelihood
and G the accounting constraints. Internally the unmatched masses are
carried as s = -u and t = -v.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from mfe.equilibrium import solve_ipfp
from mfe.errors import MfeError
from mfe.estimation.likelihood import ObservedData
from mfe.estimation.nested import EstimationResult
from mfe.families.base import MatchingFamily, as_theta
from mfe.models import SolverOptions
from mfe.types import Market, ParamVector

logger = logging.getLogger(__name__)

MAX_HALVINGS = 50


@dataclass(frozen=True)
class MpecState:
    theta: ParamVector
    u: np.ndarray
    v: np.ndarray
    lam: np.ndarray

    def unmatched(self) -> tuple[np.ndarray, np.ndarray]:
        return np.exp(-self.u), np.exp(-self.v)


class _MpecProblem:
    """Z and its Jacobian for one observed matching, in (theta, s, t, lambda) coordinates."""

    def __init__(self, family: MatchingFamily, observed: ObservedData) -> None:
        self.family = family
        self.k = family.theta_dim
        self.nx, self.ny = observed.space.shape
        # Degree-1 homogeneous families are fitted on the frequency scale.
        self.scale = observed.households if family.descriptor.homogeneous_degree_one else 1.0
        market = observed.market
        self.n = market.n / self.scale
        self.m = market.m / self.scale
        freq = observed.frequencies
        self.pi_xy = freq.couples
        self.pi_x0 = freq.singles_men
        self.pi_0y = freq.singles_women

    def split(self, z: np.ndarray):
        k, nx, ny = self.k, self.nx, self.ny
        return z[:k], z[k:k + nx], z[k + nx:k + nx + ny], z[k + nx + ny:]

    def evaluate(self, z: np.ndarray, *, jacobian: bool) -> tuple[np.ndarray, np.ndarray | None]:
        k, nx, ny = self.k, self.nx, self.ny
        theta, s, t, lam = self.split(z)
        a, b = np.exp(s), np.exp(t)
        ld = self.family.bind(theta).log_derivatives(a, b, params=True, second=jacobian)
        live = ld.allowed
        mass = ld.mass()

        def zero(x):
            return np.where(live, x, 0.0)

        l_s = zero(np.broadcast_to(ld.l_s, mass.shape))
        l_t = zero(np.broadcast_to(ld.l_t, mass.shape))
        l_th = zero(ld.l_theta)

        total = mass.sum() + a.sum() + b.sum()
        lam_x, lam_y = lam[:nx], lam[nx:]
        coef = -(lam_x[:, None] + lam_y[None, :]) - 1.0 / total
        w_grad = np.where(live, self.pi_xy, 0.0) + coef * mass

        grad = np.concatenate([
            np.einsum("krc,rc->k", l_th, w_grad),
            (w_grad * l_s).sum(axis=1) + self.pi_x0 - (lam_x + 1.0 / total) * a,
            (w_grad * l_t).sum(axis=0) + self.pi_0y - (lam_y + 1.0 / total) * b,
        ])
        g_con = np.concatenate([self.n - a - mass.sum(axis=1), self.m - b - mass.sum(axis=0)])
        zvec = np.concatenate([grad, g_con])
        if not jacobian:
            return zvec, None

        m_th = mass * l_th
        m_s = mass * l_s
        m_t = mass * l_t
        dg = np.zeros((nx + ny, k + nx + ny))
        dg[:nx, :k] = -m_th.sum(axis=2).T
        dg[nx:, :k] = -m_th.sum(axis=1).T
        dg[:nx, k:k + nx] = -np.diag(a + m_s.sum(axis=1))
        dg[:nx, k + nx:] = -m_t
        dg[nx:, k:k + nx] = -m_s.T
        dg[nx:, k + nx:] = -np.diag(b + m_t.sum(axis=0))

        w1 = w_grad
        w2 = coef * mass

        def second(x, shape):
            return np.zeros(shape) if x is None else zero(np.broadcast_to(x, shape))

        cell = mass.shape
        l_ss = second(ld.l_ss, cell)
        l_st = second(ld.l_st, cell)
        l_tt = second(ld.l_tt, cell)
        l_sth = second(ld.l_s_theta, l_th.shape)
        l_tth = second(ld.l_t_theta, l_th.shape)
        l_thth = second(ld.l_theta_theta, (k, k, *cell))

        hess = np.zeros((k + nx + ny, k + nx + ny))
        hess[:k, :k] = np.einsum("klrc,rc->kl", l_thth, w1) + np.einsum("krc,lrc,rc->kl", l_th, l_th, w2)
        h_ths = ((w1 * l_sth) + w2 * l_th * l_s).sum(axis=2)
        h_tht = ((w1 * l_tth) + w2 * l_th * l_t).sum(axis=1)
        hess[:k, k:k + nx] = h_ths
        hess[k:k + nx, :k] = h_ths.T
        hess[:k, k + nx:] = h_tht
        hess[k + nx:, :k] = h_tht.T
        hess[k:k + nx, k:k + nx] = np.diag((w1 * l_ss + w2 * l_s**2).sum(axis=1) - (lam_x + 1.0 / total) * a)
        hess[k + nx:, k + nx:] = np.diag((w1 * l_tt + w2 * l_t**2).sum(axis=0) - (lam_y + 1.0 / total) * b)
        h_st = w1 * l_st + w2 * l_s * l_t
        hess[k:k + nx, k + nx:] = h_st
        hess[k + nx:, k:k + nx] = h_st.T
        grad_total = np.concatenate([m_th.sum(axis=(1, 2)), a + m_s.sum(axis=1), b + m_t.sum(axis=0)])
        hess += np.outer(grad_total, grad_total) / total**2

        jac = np.block([[hess, dg.T], [dg, np.zeros((nx + ny, nx + ny))]])
        return zvec, jac

    def initial(self, theta: np.ndarray, opts: SolverOptions) -> np.ndarray:
        """(s, t) from the equilibrium at theta; lambda makes the (s, t) block of Z vanish."""
        k, nx = self.k, self.nx
        sol = solve_ipfp(self.family, theta, Market(self.family.space, self.n, self.m), opts)
        a, b = sol.unmatched
        z = np.concatenate([theta, np.log(a), np.log(b), np.zeros(nx + self.ny)])
        zvec, jac = self.evaluate(z, jacobian=True)
        dg_st = jac[k + nx + self.ny:, k:k + nx + self.ny]
        grad_st = zvec[k:k + nx + self.ny]
        z[k + nx + self.ny:] = scipy.linalg.solve(dg_st.T, -grad_st)
        return z


def mpec_residual(family: MatchingFamily, observed: ObservedData, state: MpecState) -> np.ndarray:
    """Z at a state; u, v are on the scale the fit works in (frequency scale for degree-1 families)."""
    problem = _MpecProblem(family, observed)
    z = np.concatenate([state.theta.values, -state.u, -state.v, state.lam])
    return problem.evaluate(z, jacobian=False)[0]


def initial_state(family: MatchingFamily, observed: ObservedData, theta, opts: SolverOptions | None = None) -> MpecState:
    problem = _MpecProblem(family, observed)
    z = problem.initial(np.array(as_theta(theta), dtype=float), opts or SolverOptions())
    th, s, t, lam = problem.split(z)
    return MpecState(family.params(th), -s, -t, lam)


def fit_mpec(
    family: MatchingFamily,
    observed: ObservedData,
    theta_init,
    opts: SolverOptions | None = None,
    *,
    max_iter: int = 200,
) -> EstimationResult:
    opts = opts or SolverOptions()
    problem = _MpecProblem(family, observed)
    theta0 = np.array(as_theta(theta_init), dtype=float)
    family.validate_theta(theta0)
    k = problem.k

    def failed(theta, iteration, message) -> EstimationResult:
        logger.warning("mpec fit failed after %d iterations: %s", iteration, message)
        return EstimationResult(family.params(theta), float("nan"), float("inf"), iteration, False, "mpec", message)

    try:
        z = problem.initial(theta0, opts)
        zvec, jac = problem.evaluate(z, jacobian=True)
    except (MfeError, scipy.linalg.LinAlgError, ValueError) as exc:
        return failed(theta0, 0, str(exc))

    norm = float(np.linalg.norm(zvec))
    iteration = 0
    while float(np.max(np.abs(zvec))) > opts.tol and iteration < max_iter:
        iteration += 1
        try:
            step_dir = scipy.linalg.solve(jac, -zvec)
        except (scipy.linalg.LinAlgError, ValueError):
            return failed(z[:k], iteration, "singular KKT Jacobian")

        step = 1.0
        for _ in range(MAX_HALVINGS):
            trial = z + step * step_dir
            try:
                z_try, _ = problem.evaluate(trial, jacobian=False)
            except MfeError:
                z_try = None
            if z_try is not None and np.all(np.isfinite(z_try)) and np.linalg.norm(z_try) < norm:
                break
            step *= 0.5
        else:
            return failed(z[:k], iteration, "line search could not reduce |Z|")

        z = trial
        zvec, jac = problem.evaluate(z, jacobian=True)
        norm = float(np.linalg.norm(zvec))
        logger.debug("mpec iteration %d: step %.3g |Z| %.3e", iteration, step, norm)

    converged = float(np.max(np.abs(zvec))) <= opts.tol
    theta_hat, s, t, _ = problem.split(z)
    a, b = np.exp(s), np.exp(t)
    mass = family.bind(theta_hat).value(a, b)
    total = mass.sum() + a.sum() + b.sum()
    freq = np.concatenate([mass.ravel(), a, b]) / total
    counts = observed.counts
    seen = counts > 0
    loglik = float(np.sum(counts[seen] * np.log(freq[seen]))) if np.all(freq[seen] > 0) else float("-inf")
    if not converged:
        logger.warning("mpec fit hit %d iterations with |Z|=%.3e", iteration, norm)
    return EstimationResult(
        theta_hat=family.params(theta_hat),
        loglik=loglik,
        gradient_norm=float(np.max(np.abs(zvec[:k]))) if k else 0.0,
        iterations=iteration,
        converged=converged,
        method="mpec",
        message="converged" if converged else "iteration limit",
    )

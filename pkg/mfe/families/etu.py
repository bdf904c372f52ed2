"""Exponentially transferable utility: M = exp(-D(-log a, -log b)).

With w = (-alpha - s) / tau and z = (-gamma - t) / tau,
log M = -tau * logaddexp(w, z) + tau * log 2, and with p = expit(w - z),
d log M / ds = d log M / d alpha = p and d log M / dt = d log M / d gamma = 1 - p.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from mfe.errors import DomainError
from mfe.families.base import FamilyDescriptor, LogDerivatives, MatchingFamily
from mfe.families.design import SurplusDesign
from mfe.types import TypeSpace

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class EtuParams:
    tau: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray

    def __post_init__(self) -> None:
        alpha = np.array(self.alpha, dtype=float)
        gamma = np.array(self.gamma, dtype=float)
        tau = np.broadcast_to(np.asarray(self.tau, dtype=float), alpha.shape).copy()
        if gamma.shape != alpha.shape:
            raise DomainError("alpha and gamma tables must have the same shape")
        if np.any(tau <= 0) or not np.all(np.isfinite(tau)):
            raise DomainError("tau must be positive and finite on every cell")
        for arr in (tau, alpha, gamma):
            arr.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", gamma)


def etu_distance(params: EtuParams, x: int, y: int, u: float, v: float) -> float:
    tau = float(params.tau[x, y])
    lse = np.logaddexp((u - params.alpha[x, y]) / tau, (v - params.gamma[x, y]) / tau)
    return float(tau * (lse - LOG2))


def _kernel(alpha, gamma, tau, s, t):
    w = (-alpha - s) / tau
    z = (-gamma - t) / tau
    lse = np.logaddexp(w, z)
    p = expit(w - z)
    return w, z, lse, p, 1.0 - p


class EtuGkw(MatchingFamily):
    """ETU with a fixed tau table; theta holds the alpha then the gamma design coefficients."""

    name = "etu"

    def __init__(
        self,
        space: TypeSpace,
        tau: np.ndarray | float,
        alpha_design: SurplusDesign,
        gamma_design: SurplusDesign,
        allowed: np.ndarray | None = None,
    ) -> None:
        super().__init__(space, allowed)
        self.tau = np.broadcast_to(np.asarray(tau, dtype=float), space.shape).copy()
        if np.any(self.tau <= 0):
            raise DomainError("tau must be positive on every cell")
        self.alpha_design = alpha_design
        self.gamma_design = gamma_design

    @property
    def descriptor(self) -> FamilyDescriptor:
        return FamilyDescriptor(self.name, self.alpha_design.dim + self.gamma_design.dim, 1.0, False, False)

    def param_names(self) -> tuple[str, ...]:
        return self.alpha_design.names + self.gamma_design.names

    def _split(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ka = self.alpha_design.dim
        return theta[:ka], theta[ka:ka + self.gamma_design.dim]

    def _tau(self, theta: np.ndarray) -> np.ndarray:
        return self.tau

    def params_at(self, theta) -> EtuParams:
        th = self.bind(theta).theta
        t_alpha, t_gamma = self._split(th)
        return EtuParams(self._tau(th), self.alpha_design.phi(t_alpha), self.gamma_design.phi(t_gamma))

    def cell_tables(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        t_alpha, t_gamma = self._split(theta)
        return {
            "alpha": self.alpha_design.phi(t_alpha),
            "gamma": self.gamma_design.phi(t_gamma),
            "tau": np.broadcast_to(self._tau(theta), self.space.shape),
        }

    def _directions(self, ix: tuple) -> tuple[np.ndarray, np.ndarray]:
        """Per-parameter basis for alpha (first slot) and gamma (second slot)."""
        ba = self.alpha_design.basis_at(ix)
        bg = self.gamma_design.basis_at(ix)
        first = np.concatenate([ba, np.zeros((bg.shape[0], *ba.shape[1:]))])
        second = np.concatenate([np.zeros((ba.shape[0], *bg.shape[1:])), bg])
        return first, second

    def log_terms(self, theta, tables, ix, s, t, *, params, second) -> LogDerivatives:
        tau = tables["tau"]
        w, z, lse, p, q = _kernel(tables["alpha"], tables["gamma"], tau, s, t)
        shape = np.broadcast_shapes(s.shape, t.shape)
        p = np.broadcast_to(p, shape)
        q = np.broadcast_to(q, shape)
        out = dict(l=-tau * lse + tau * LOG2, l_s=p, l_t=q, allowed=tables["allowed"])

        if params or second:
            c1, c2 = self._directions(ix)
            d = c1 - c2
        if params:
            out["l_theta"] = p * c1 + q * c2
        if second:
            h = p * q / tau
            out.update(
                l_ss=-h,
                l_st=h,
                l_tt=-h,
                l_s_theta=-h * d,
                l_t_theta=h * d,
                l_theta_theta=-h * np.einsum("krc,lrc->klrc", d, d),
            )
        return LogDerivatives(**out)


class HarmonicMean(EtuGkw):
    """ETU with a single free tau appended to theta; tau = 1 and alpha = gamma = 0 is the harmonic mean."""

    name = "harmonic-mean"

    def __init__(
        self,
        space: TypeSpace,
        alpha_design: SurplusDesign,
        gamma_design: SurplusDesign,
        allowed: np.ndarray | None = None,
    ) -> None:
        super().__init__(space, 1.0, alpha_design, gamma_design, allowed)

    @property
    def descriptor(self) -> FamilyDescriptor:
        return FamilyDescriptor(self.name, self.alpha_design.dim + self.gamma_design.dim + 1, 1.0, False, False)

    def param_names(self) -> tuple[str, ...]:
        return super().param_names() + ("tau",)

    def validate_theta(self, theta: np.ndarray) -> None:
        super().validate_theta(theta)
        if theta[-1] <= 0:
            raise DomainError(f"tau must be positive, got {theta[-1]}")

    def _tau(self, theta: np.ndarray) -> np.ndarray:
        return np.full(self.space.shape, float(theta[-1]))

    def log_terms(self, theta, tables, ix, s, t, *, params, second) -> LogDerivatives:
        base = super().log_terms(theta, tables, ix, s, t, params=params, second=second)
        if not (params or second):
            return base

        tau = tables["tau"]
        w, z, lse, p, q = _kernel(tables["alpha"], tables["gamma"], tau, s, t)
        shape = base.l.shape
        extra: dict[str, np.ndarray] = {}
        if params:
            l_tau = np.broadcast_to(LOG2 - lse + p * w + q * z, shape)
            extra["l_theta"] = np.concatenate([base.l_theta, l_tau[None]])
        if second:
            pq = p * q
            g = np.broadcast_to(pq * (z - w) / tau, shape)
            l_tau_tau = np.broadcast_to(-pq * (w - z) ** 2 / tau, shape)
            c1, c2 = self._directions(ix)
            cross = (c1 - c2) * g
            k = cross.shape[0]
            hess = np.zeros((k + 1, k + 1, *shape))
            hess[:k, :k] = base.l_theta_theta
            hess[:k, k] = cross
            hess[k, :k] = cross
            hess[k, k] = l_tau_tau
            extra.update(
                l_s_theta=np.concatenate([base.l_s_theta, g[None]]),
                l_t_theta=np.concatenate([base.l_t_theta, -g[None]]),
                l_theta_theta=hess,
            )
        return replace(base, **extra)

from __future__ import annotations

import numpy as np

from mfe.errors import DomainError
from mfe.families.base import FamilyDescriptor, LogDerivatives, MatchingFamily
from mfe.types import TypeSpace


class SearchMatching(MatchingFamily):
    """Search and matching with meeting rate rho and separation rate delta.

    M = (rho / delta) a b on cells the acceptance table A(x, y) permits, 0 elsewhere.
    theta = (rho / delta,).
    """

    name = "search"

    def __init__(self, space: TypeSpace, acceptance: np.ndarray | None = None) -> None:
        super().__init__(space, acceptance)

    @property
    def descriptor(self) -> FamilyDescriptor:
        return FamilyDescriptor(self.name, 1, 2.0, True, True)

    def param_names(self) -> tuple[str, ...]:
        return ("rho_over_delta",)

    def validate_theta(self, theta: np.ndarray) -> None:
        super().validate_theta(theta)
        if theta[0] <= 0:
            raise DomainError(f"rho/delta must be positive, got {theta[0]}")

    def cell_tables(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {}

    def log_terms(self, theta, tables, ix, s, t, *, params, second) -> LogDerivatives:
        shape = np.broadcast_shapes(s.shape, t.shape)
        one = np.ones(shape)
        rate = float(theta[0])
        return LogDerivatives(
            l=np.log(rate) + s + t,
            l_s=one,
            l_t=one,
            allowed=tables["allowed"],
            l_theta=np.full((1, *shape), 1.0 / rate) if params else None,
            l_theta_theta=np.full((1, 1, *shape), -1.0 / rate**2) if second else None,
        )

    def ratio_exponents(self) -> tuple[np.ndarray, np.ndarray]:
        one = np.ones(self.space.shape)
        return one, one

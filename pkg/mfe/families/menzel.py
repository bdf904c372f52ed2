from __future__ import annotations

import numpy as np

from mfe.families.base import FamilyDescriptor, LogDerivatives, MatchingFamily
from mfe.families.design import SurplusDesign
from mfe.types import TypeSpace


class Menzel(MatchingFamily):
    """Non-transferable utility, large-market limit: M = a b exp(alpha + gamma).

    The design parameterises the sum alpha_xy + gamma_xy. Homogeneous of degree 2.
    """

    name = "menzel"

    def __init__(self, space: TypeSpace, design: SurplusDesign, allowed: np.ndarray | None = None) -> None:
        super().__init__(space, allowed)
        self.design = design

    @property
    def descriptor(self) -> FamilyDescriptor:
        return FamilyDescriptor(self.name, self.design.dim, 2.0, True, True)

    def param_names(self) -> tuple[str, ...]:
        return self.design.names

    def cell_tables(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {"phi": self.design.phi(theta)}

    def log_terms(self, theta, tables, ix, s, t, *, params, second) -> LogDerivatives:
        one = np.ones(np.broadcast_shapes(s.shape, t.shape))
        return LogDerivatives(
            l=s + t + tables["phi"],
            l_s=one,
            l_t=one,
            allowed=tables["allowed"],
            l_theta=self.design.basis_at(ix) if params else None,
        )

    def ratio_exponents(self) -> tuple[np.ndarray, np.ndarray]:
        one = np.ones(self.space.shape)
        return one, one

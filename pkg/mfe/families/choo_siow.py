from __future__ import annotations

import numpy as np

from mfe.families.base import FamilyDescriptor, LogDerivatives, MatchingFamily
from mfe.families.design import SurplusDesign, SurplusTable
from mfe.types import ParamVector, TypeSpace


class ChooSiow(MatchingFamily):
    """Transferable utility with logit heterogeneity: M = sqrt(a b) exp(Phi / 2)."""

    name = "choo-siow"

    def __init__(self, space: TypeSpace, design: SurplusDesign, allowed: np.ndarray | None = None) -> None:
        super().__init__(space, allowed)
        self.design = design

    @classmethod
    def from_surplus(cls, table: SurplusTable) -> tuple["ChooSiow", ParamVector]:
        family = cls(table.space, SurplusDesign.free(table.space), table.allowed)
        return family, family.params(table.phi.ravel())

    @property
    def descriptor(self) -> FamilyDescriptor:
        return FamilyDescriptor(self.name, self.design.dim, 1.0, True, True)

    def param_names(self) -> tuple[str, ...]:
        return self.design.names

    def cell_tables(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {"phi": self.design.phi(theta)}

    def log_terms(self, theta, tables, ix, s, t, *, params, second) -> LogDerivatives:
        half = np.full(np.broadcast_shapes(s.shape, t.shape), 0.5)
        return LogDerivatives(
            l=0.5 * (s + t + tables["phi"]),
            l_s=half,
            l_t=half,
            allowed=tables["allowed"],
            l_theta=0.5 * self.design.basis_at(ix) if params else None,
        )

    def ratio_exponents(self) -> tuple[np.ndarray, np.ndarray]:
        half = np.full(self.space.shape, 0.5)
        return half, half

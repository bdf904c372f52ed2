from __future__ import annotations

import numpy as np

from mfe.errors import ConfigurationError
from mfe.families.base import FamilyDescriptor, LogDerivatives, MatchingFamily
from mfe.families.design import SurplusDesign
from mfe.types import TypeSpace


class CobbDouglas(MatchingFamily):
    """Transferable utility with peer effects.

    M = a^{a_xy} b^{b_xy} exp(Phi / (2 - psi_x - Psi_y)); exponents are taken
    as given rather than derived from peer-effect primitives.
    """

    name = "cobb-douglas"

    def __init__(
        self,
        space: TypeSpace,
        design: SurplusDesign,
        exponent_a: np.ndarray,
        exponent_b: np.ndarray,
        psi: np.ndarray | None = None,
        Psi: np.ndarray | None = None,
        allowed: np.ndarray | None = None,
    ) -> None:
        super().__init__(space, allowed)
        self.design = design
        self.exponent_a = np.broadcast_to(np.asarray(exponent_a, dtype=float), space.shape).copy()
        self.exponent_b = np.broadcast_to(np.asarray(exponent_b, dtype=float), space.shape).copy()
        if np.any(self.exponent_a <= 0) or np.any(self.exponent_b <= 0):
            raise ConfigurationError("Cobb-Douglas exponents must be strictly positive")
        psi = np.zeros(space.nx) if psi is None else np.asarray(psi, dtype=float)
        Psi = np.zeros(space.ny) if Psi is None else np.asarray(Psi, dtype=float)
        if psi.shape != (space.nx,) or Psi.shape != (space.ny,):
            raise ConfigurationError("peer-effect vectors do not match the type space")
        self.scale = 2.0 - psi[:, None] - Psi[None, :]
        if np.any(self.scale <= 0):
            raise ConfigurationError("peer effects must satisfy psi_x + Psi_y < 2")

    @property
    def homogeneous_degree(self) -> float | None:
        total = self.exponent_a + self.exponent_b
        return float(total.flat[0]) if np.allclose(total, total.flat[0], rtol=0, atol=1e-14) else None

    @property
    def descriptor(self) -> FamilyDescriptor:
        degree = self.homogeneous_degree
        return FamilyDescriptor(self.name, self.design.dim, degree, True, degree is not None)

    def param_names(self) -> tuple[str, ...]:
        return self.design.names

    def cell_tables(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        return {"phi": self.design.phi(theta), "ea": self.exponent_a, "eb": self.exponent_b, "scale": self.scale}

    def log_terms(self, theta, tables, ix, s, t, *, params, second) -> LogDerivatives:
        ea, eb, scale = tables["ea"], tables["eb"], tables["scale"]
        shape = np.broadcast_shapes(s.shape, t.shape)
        return LogDerivatives(
            l=ea * s + eb * t + tables["phi"] / scale,
            l_s=np.broadcast_to(ea, shape),
            l_t=np.broadcast_to(eb, shape),
            allowed=tables["allowed"],
            l_theta=self.design.basis_at(ix) / scale if params else None,
        )

    def ratio_exponents(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.descriptor.has_theta_free_ratio:
            return super().ratio_exponents()
        return self.exponent_a.copy(), self.exponent_b.copy()

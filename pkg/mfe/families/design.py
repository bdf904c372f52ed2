"""Surplus tables and linear surplus designs Phi(theta) = offset + sum_k theta_k B^k."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from mfe.errors import ConfigurationError, DomainError
from mfe.types import ParamVector, TypeSpace

N_AGES = 60
N_EDUCATION = 3


@dataclass(frozen=True)
class SurplusTable:
    """Joint surplus per couple cell; prohibited cells carry no mass."""

    space: TypeSpace
    phi: np.ndarray
    prohibited: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        phi = np.array(self.phi, dtype=float)
        mask = np.zeros(self.space.shape, dtype=bool) if self.prohibited is None else np.array(self.prohibited, dtype=bool)
        if phi.shape != self.space.shape or mask.shape != self.space.shape:
            raise DomainError("surplus table does not match the type space")
        if not np.all(np.isfinite(phi[~mask])):
            raise DomainError("surplus must be finite on every permitted cell")
        phi[mask] = 0.0
        phi.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "prohibited", mask)

    @property
    def allowed(self) -> np.ndarray:
        return ~self.prohibited


@dataclass(frozen=True)
class SurplusDesign:
    offset: np.ndarray
    basis: np.ndarray
    names: tuple[str, ...]
    kind: str = "custom"

    def __post_init__(self) -> None:
        basis = np.array(self.basis, dtype=float)
        offset = np.array(self.offset, dtype=float)
        if basis.ndim != 3 or basis.shape[1:] != offset.shape:
            raise ConfigurationError(f"basis shape {basis.shape} incompatible with offset {offset.shape}")
        if len(self.names) != basis.shape[0]:
            raise ConfigurationError("one name per basis matrix is required")
        basis.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def phi(self, theta: np.ndarray) -> np.ndarray:
        return self.offset + np.tensordot(theta, self.basis, axes=1)

    def basis_at(self, ix: tuple) -> np.ndarray:
        return self.basis[(slice(None), *ix)]

    @classmethod
    def free(cls, space: TypeSpace, prefix: str = "phi") -> "SurplusDesign":
        nx, ny = space.shape
        basis = np.eye(nx * ny).reshape(nx * ny, nx, ny)
        names = tuple(f"{prefix}[{x},{y}]" for x in space.x_labels for y in space.y_labels)
        return cls(np.zeros((nx, ny)), basis, names, "free")

    @classmethod
    def constant(cls, space: TypeSpace, name: str = "phi0") -> "SurplusDesign":
        return cls(np.zeros(space.shape), np.ones((1, *space.shape)), (name,), "constant")

    @classmethod
    def interaction(cls, x_values: Sequence[float], y_values: Sequence[float], name: str = "scale") -> "SurplusDesign":
        """Phi_xy = theta * x * y over scalar type attributes."""
        xy = np.outer(np.asarray(x_values, dtype=float), np.asarray(y_values, dtype=float))
        return cls(np.zeros(xy.shape), xy[None, :, :], (name,), "interaction")

    @classmethod
    def age_education(
        cls,
        x_types: Sequence[tuple[int, int]],
        y_types: Sequence[tuple[int, int]],
        prefix: str | None = None,
    ) -> "SurplusDesign":
        """The age x education design; types are (age index 1..60, education 1..3).

        `prefix` qualifies the parameter names when two designs share one theta.
        """
        basis = np.zeros((len(age_education_names()), len(x_types), len(y_types)))
        for i, xt in enumerate(x_types):
            for j, yt in enumerate(y_types):
                basis[_age_education_terms(xt, yt), i, j] = 1.0
        names = age_education_names()
        if prefix:
            names = tuple(f"{prefix}.{n}" for n in names)
        return cls(np.zeros(basis.shape[1:]), basis, names, "age-education")

    def table(self, space: TypeSpace, theta: np.ndarray, prohibited: np.ndarray | None = None) -> SurplusTable:
        return SurplusTable(space, self.phi(np.asarray(theta, dtype=float)), prohibited)


def age_education_names() -> tuple[str, ...]:
    ages = range(2, N_AGES + 1)
    edu = range(2, N_EDUCATION + 1)
    return (
        ("theta0",)
        + tuple(f"ma{i}" for i in ages)
        + tuple(f"me{i}" for i in edu)
        + tuple(f"wa{i}" for i in ages)
        + tuple(f"we{i}" for i in edu)
        + tuple(f"mwa{i}" for i in range(1, N_AGES))
        + tuple(f"mwe{i}" for i in range(1, N_EDUCATION))
    )


def _check_type(kind: str, t: tuple[int, int]) -> tuple[int, int]:
    age, edu = int(t[0]), int(t[1])
    if not 1 <= age <= N_AGES:
        raise DomainError(f"{kind} age index {age} outside 1..{N_AGES}")
    if not 1 <= edu <= N_EDUCATION:
        raise DomainError(f"{kind} education index {edu} outside 1..{N_EDUCATION}")
    return age, edu


def _age_education_terms(x: tuple[int, int], y: tuple[int, int]) -> list[int]:
    xa, xe = _check_type("man", x)
    ya, ye = _check_type("woman", y)
    ma0 = 1
    me0 = ma0 + N_AGES - 1
    wa0 = me0 + N_EDUCATION - 1
    we0 = wa0 + N_AGES - 1
    mwa0 = we0 + N_EDUCATION - 1
    mwe0 = mwa0 + N_AGES - 1

    terms = [0]
    if xa >= 2:
        terms.append(ma0 + xa - 2)
    if xe >= 2:
        terms.append(me0 + xe - 2)
    if ya >= 2:
        terms.append(wa0 + ya - 2)
    if ye >= 2:
        terms.append(we0 + ye - 2)
    if abs(xa - ya) >= 1:
        terms.append(mwa0 + abs(xa - ya) - 1)
    if abs(xe - ye) >= 1:
        terms.append(mwe0 + abs(xe - ye) - 1)
    return terms


def surplus_parametric(theta: ParamVector | Sequence[float] | np.ndarray, x: tuple[int, int], y: tuple[int, int]) -> float:
    values = theta.values if isinstance(theta, ParamVector) else np.asarray(theta, dtype=float)
    if values.shape != (len(age_education_names()),):
        raise ConfigurationError(f"age-education surplus takes {len(age_education_names())} parameters, got {values.size}")
    return float(values[_age_education_terms(x, y)].sum())

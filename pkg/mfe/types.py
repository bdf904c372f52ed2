"""Shared data model: type spaces, markets, matchings, parameters, frequencies.

Households are indexed over XY0 in a fixed order: couples row-major
(x outer, y inner), then single men by x, then single women by y.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from mfe.errors import ConfigurationError, DomainError

SINGLE = "0"


def _frozen(values: Iterable[float] | np.ndarray, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise DomainError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TypeSpace:
    x_labels: tuple[str, ...]
    y_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_labels", tuple(str(s) for s in self.x_labels))
        object.__setattr__(self, "y_labels", tuple(str(s) for s in self.y_labels))
        for side, labels in (("x", self.x_labels), ("y", self.y_labels)):
            if not labels:
                raise DomainError(f"{side}-side of the type space is empty")
            if any(not lab for lab in labels):
                raise DomainError(f"{side}-side labels must be non-empty")
            if SINGLE in labels:
                raise DomainError(f"label '{SINGLE}' is reserved for singlehood")
            if len(set(labels)) != len(labels):
                raise DomainError(f"{side}-side labels must be unique")

    @classmethod
    def of_size(cls, nx: int, ny: int) -> "TypeSpace":
        return cls(tuple(f"x{i + 1}" for i in range(nx)), tuple(f"y{j + 1}" for j in range(ny)))

    @property
    def nx(self) -> int:
        return len(self.x_labels)

    @property
    def ny(self) -> int:
        return len(self.y_labels)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_households(self) -> int:
        return self.nx * self.ny + self.nx + self.ny

    def x_index(self, label: str) -> int:
        try:
            return self.x_labels.index(label)
        except ValueError:
            raise DomainError(f"unknown x label '{label}'") from None

    def y_index(self, label: str) -> int:
        try:
            return self.y_labels.index(label)
        except ValueError:
            raise DomainError(f"unknown y label '{label}'") from None

    def household_labels(self) -> list[tuple[str, str]]:
        couples = [(x, y) for x in self.x_labels for y in self.y_labels]
        return couples + [(x, SINGLE) for x in self.x_labels] + [(SINGLE, y) for y in self.y_labels]


@dataclass(frozen=True)
class Market:
    space: TypeSpace
    n: np.ndarray
    m: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", _frozen(self.n, 1, "n"))
        object.__setattr__(self, "m", _frozen(self.m, 1, "m"))
        if self.n.shape != (self.space.nx,) or self.m.shape != (self.space.ny,):
            raise DomainError("margin lengths do not match the type space")
        if not (np.all(self.n > 0) and np.all(self.m > 0)):
            raise DomainError("all margins must be strictly positive")
        if not (np.all(np.isfinite(self.n)) and np.all(np.isfinite(self.m))):
            raise DomainError("margins must be finite")

    @property
    def total(self) -> float:
        return float(self.n.sum() + self.m.sum())

    def rescaled(self, k: float) -> "Market":
        return Market(self.space, self.n / k, self.m / k)

    def margins(self) -> np.ndarray:
        return np.concatenate([self.n, self.m])


@dataclass(frozen=True)
class Matching:
    space: TypeSpace
    mu_xy: np.ndarray
    mu_x0: np.ndarray
    mu_0y: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu_xy", _frozen(self.mu_xy, 2, "mu_xy"))
        object.__setattr__(self, "mu_x0", _frozen(self.mu_x0, 1, "mu_x0"))
        object.__setattr__(self, "mu_0y", _frozen(self.mu_0y, 1, "mu_0y"))
        if self.mu_xy.shape != self.space.shape:
            raise DomainError(f"mu_xy shape {self.mu_xy.shape} does not match {self.space.shape}")
        if self.mu_x0.shape != (self.space.nx,) or self.mu_0y.shape != (self.space.ny,):
            raise DomainError("singles vectors do not match the type space")
        for arr in (self.mu_xy, self.mu_x0, self.mu_0y):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise DomainError("matching masses must be finite and nonnegative")

    def margins(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mu_x0 + self.mu_xy.sum(axis=1), self.mu_0y + self.mu_xy.sum(axis=0)

    def market(self) -> Market:
        n, m = self.margins()
        return Market(self.space, n, m)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.mu_xy.ravel(), self.mu_x0, self.mu_0y])

    @classmethod
    def from_vector(cls, space: TypeSpace, vec: Sequence[float] | np.ndarray) -> "Matching":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (space.n_households,):
            raise DomainError(f"expected {space.n_households} household entries, got {vec.shape}")
        k = space.nx * space.ny
        return cls(space, vec[:k].reshape(space.shape), vec[k:k + space.nx], vec[k + space.nx:])

    @property
    def total(self) -> float:
        return float(self.mu_xy.sum() + self.mu_x0.sum() + self.mu_0y.sum())

    def scaled(self, k: float) -> "Matching":
        return Matching(self.space, self.mu_xy * k, self.mu_x0 * k, self.mu_0y * k)

    def accounting_residual(self, market: Market) -> float:
        n, m = self.margins()
        return float(max(np.max(np.abs(n - market.n)), np.max(np.abs(m - market.m))))

    def is_feasible(self, market: Market, tol: float) -> bool:
        return self.accounting_residual(market) <= tol


@dataclass(frozen=True)
class ParamVector:
    values: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        values = _frozen(self.values, 1, "theta")
        names = tuple(self.names) or tuple(f"theta{i}" for i in range(values.size))
        if len(names) != values.size:
            raise ConfigurationError(f"{values.size} values but {len(names)} names")
        if len(set(names)) != len(names):
            raise ConfigurationError("parameter names must be unique")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return int(self.values.size)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return np.asarray(self.values, dtype=dtype)

    def with_values(self, values: Sequence[float] | np.ndarray) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=float), self.names)

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.names, self.values)}


@dataclass(frozen=True)
class HouseholdFrequencies:
    space: TypeSpace
    pi: np.ndarray
    household_count: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "pi", _frozen(self.pi, 1, "pi"))
        if self.pi.shape != (self.space.n_households,):
            raise DomainError("frequency vector does not match the household index space")
        if np.any(self.pi < 0) or not np.all(np.isfinite(self.pi)):
            raise DomainError("frequencies must be finite and nonnegative")

    @property
    def couples(self) -> np.ndarray:
        return self.pi[: self.space.nx * self.space.ny].reshape(self.space.shape)

    @property
    def singles_men(self) -> np.ndarray:
        k = self.space.nx * self.space.ny
        return self.pi[k:k + self.space.nx]

    @property
    def singles_women(self) -> np.ndarray:
        return self.pi[self.space.nx * self.space.ny + self.space.nx:]


def normalize_to_frequencies(matching: Matching) -> tuple[HouseholdFrequencies, float]:
    total = matching.total
    if total <= 0:
        raise DomainError("empty matching")
    return HouseholdFrequencies(matching.space, matching.to_vector() / total, total), total


def margin_matrix(space: TypeSpace) -> np.ndarray:
    """The (|X|+|Y|) x |XY0| matrix A mapping household frequencies to margins."""
    nx, ny = space.shape
    a = np.zeros((nx + ny, space.n_households))
    for x in range(nx):
        for y in range(ny):
            col = x * ny + y
            a[x, col] = 1.0
            a[nx + y, col] = 1.0
    for x in range(nx):
        a[x, nx * ny + x] = 1.0
    for y in range(ny):
        a[nx + y, nx * ny + nx + y] = 1.0
    return a


def aggregate_margins(pi: HouseholdFrequencies) -> np.ndarray:
    couples = pi.couples
    zeta_x = pi.singles_men + couples.sum(axis=1)
    zeta_y = pi.singles_women + couples.sum(axis=0)
    return np.concatenate([zeta_x, zeta_y])

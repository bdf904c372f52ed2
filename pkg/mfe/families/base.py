"""Matching-function base class.

Every family is written in log space: with s = log a and t = log b
(a = mu_x0, b = mu_0y) it supplies l = log M and the derivatives of l in
(s, t, theta). Values and mass-space derivatives follow from
M = exp(l), dM/da = M l_s / a, dM/db = M l_t / b, dM/dtheta = M l_theta.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from mfe.errors import CapabilityError, ConfigurationError, DomainError
from mfe.types import ParamVector, TypeSpace

Index = np.ndarray | slice


@dataclass(frozen=True)
class FamilyDescriptor:
    name: str
    theta_dim: int
    homogeneous_degree: float | None
    separable_in_parameters: bool
    has_theta_free_ratio: bool

    def __post_init__(self) -> None:
        if self.has_theta_free_ratio and (self.homogeneous_degree is None or not self.separable_in_parameters):
            raise ConfigurationError(f"{self.name}: a theta-free ratio form needs a homogeneous separable family")

    @property
    def homogeneous_degree_one(self) -> bool:
        return self.homogeneous_degree is not None and abs(self.homogeneous_degree - 1.0) < 1e-14


@dataclass(frozen=True)
class LogDerivatives:
    """log M and its derivatives on a (rows x cols) block of cells.

    Parameter axes come first: l_theta is (K, r, c), l_theta_theta is
    (K, K, r, c). A None second derivative means identically zero.
    """

    l: np.ndarray
    l_s: np.ndarray
    l_t: np.ndarray
    allowed: np.ndarray
    l_theta: np.ndarray | None = None
    l_ss: np.ndarray | None = None
    l_st: np.ndarray | None = None
    l_tt: np.ndarray | None = None
    l_s_theta: np.ndarray | None = None
    l_t_theta: np.ndarray | None = None
    l_theta_theta: np.ndarray | None = None

    def mass(self) -> np.ndarray:
        return np.where(self.allowed, np.exp(np.where(self.allowed, self.l, 0.0)), 0.0)


def as_theta(theta: ParamVector | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(theta, ParamVector):
        return theta.values
    return np.atleast_1d(np.asarray(theta, dtype=float))


def block_index(rows: Index | None, cols: Index | None) -> tuple:
    r = slice(None) if rows is None else rows
    c = slice(None) if cols is None else cols
    if isinstance(r, slice) or isinstance(c, slice):
        return (r, c)
    return np.ix_(np.asarray(r), np.asarray(c))


class MatchingFamily(ABC):
    """A parametric aggregate matching function M^theta_xy(mu_x0, mu_0y)."""

    name: str = ""

    def __init__(self, space: TypeSpace, allowed: np.ndarray | None = None) -> None:
        self.space = space
        mask = np.ones(space.shape, dtype=bool) if allowed is None else np.asarray(allowed, dtype=bool)
        if mask.shape != space.shape:
            raise ConfigurationError(f"{self.name}: allowed-cell mask has shape {mask.shape}, expected {space.shape}")
        mask = mask.copy()
        mask.setflags(write=False)
        self.allowed = mask

    # --- implemented by each family ---

    @property
    @abstractmethod
    def descriptor(self) -> FamilyDescriptor: ...

    @abstractmethod
    def param_names(self) -> tuple[str, ...]: ...

    @abstractmethod
    def cell_tables(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Per-cell quantities that depend on theta only (computed once per theta).

        The base class adds the `allowed` mask to whatever is returned here.
        """

    @abstractmethod
    def log_terms(
        self,
        theta: np.ndarray,
        tables: dict[str, np.ndarray],
        ix: tuple,
        s: np.ndarray,
        t: np.ndarray,
        *,
        params: bool,
        second: bool,
    ) -> LogDerivatives:
        """Log-space derivatives on block `ix`; s is (r, 1), t is (1, c), tables already sliced."""

    def ratio_exponents(self) -> tuple[np.ndarray, np.ndarray]:
        raise CapabilityError(f"family '{self.name}' has no parameter-free ratio form")

    def validate_theta(self, theta: np.ndarray) -> None:
        if theta.shape != (self.descriptor.theta_dim,):
            raise ConfigurationError(
                f"{self.name}: theta has {theta.size} components, expected {self.descriptor.theta_dim}"
            )
        if not np.all(np.isfinite(theta)):
            raise DomainError(f"{self.name}: theta must be finite")

    # --- shared machinery ---

    @property
    def theta_dim(self) -> int:
        return self.descriptor.theta_dim

    def params(self, values: Sequence[float] | np.ndarray) -> ParamVector:
        return ParamVector(np.asarray(values, dtype=float), self.param_names())

    def bind(self, theta: ParamVector | Sequence[float] | np.ndarray) -> "BoundFamily":
        th = as_theta(theta)
        self.validate_theta(th)
        return BoundFamily(self, th, {"allowed": self.allowed, **self.cell_tables(th)})

    def value(self, theta, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.bind(theta).value(a, b)

    def grad_unmatched(self, theta, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.bind(theta).grad_unmatched(a, b)

    def grad_params(self, theta, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.bind(theta).grad_params(a, b)

    def ratio(self, a_ratio: np.ndarray, b_ratio: np.ndarray) -> np.ndarray:
        """g(a~, b~) on the full grid; zero on prohibited cells."""
        ea, eb = self.ratio_exponents()
        ra = np.asarray(a_ratio, dtype=float)[:, None]
        rb = np.asarray(b_ratio, dtype=float)[None, :]
        return np.where(self.allowed, ra ** ea * rb ** eb, 0.0)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.space.nx}x{self.space.ny}, theta_dim={self.theta_dim})"


@dataclass(frozen=True)
class BoundFamily:
    """A family evaluated at a fixed theta."""

    family: MatchingFamily
    theta: np.ndarray
    tables: dict[str, np.ndarray] = field(repr=False)

    def log_derivatives(
        self,
        a: np.ndarray,
        b: np.ndarray,
        *,
        rows: Index | None = None,
        cols: Index | None = None,
        params: bool = True,
        second: bool = False,
    ) -> LogDerivatives:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a <= 0) or np.any(b <= 0):
            raise DomainError("unmatched masses must be strictly positive")
        ix = block_index(rows, cols)
        tables = {k: v[ix] for k, v in self.tables.items()}
        with np.errstate(divide="ignore"):
            s = np.log(a).reshape(-1, 1)
            t = np.log(b).reshape(1, -1)
        return self.family.log_terms(self.theta, tables, ix, s, t, params=params, second=second)

    def value(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.log_derivatives(a, b, params=False).mass()

    def grad_unmatched(self, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ld = self.log_derivatives(a, b, params=False)
        m = ld.mass()
        a = np.asarray(a, dtype=float)[:, None]
        b = np.asarray(b, dtype=float)[None, :]
        return np.where(ld.allowed, m * ld.l_s / a, 0.0), np.where(ld.allowed, m * ld.l_t / b, 0.0)

    def grad_params(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ld = self.log_derivatives(a, b, params=True)
        return np.where(ld.allowed, ld.mass() * ld.l_theta, 0.0)


def _scalar_block(family: MatchingFamily, theta, x: int, y: int, a: float, b: float, params: bool) -> tuple[BoundFamily, LogDerivatives]:
    if a <= 0 or b <= 0:
        raise DomainError(f"unmatched masses must be strictly positive, got a={a}, b={b}")
    if not (0 <= x < family.space.nx and 0 <= y < family.space.ny):
        raise DomainError(f"cell ({x}, {y}) outside the type space")
    bound = family.bind(theta)
    ld = bound.log_derivatives(np.array([a]), np.array([b]), rows=np.array([x]), cols=np.array([y]), params=params)
    return bound, ld


def mf_value(family: MatchingFamily, theta, x: int, y: int, a: float, b: float) -> float:
    _, ld = _scalar_block(family, theta, x, y, a, b, params=False)
    return float(ld.mass()[0, 0])


def mf_grad_unmatched(family: MatchingFamily, theta, x: int, y: int, a: float, b: float) -> tuple[float, float]:
    _, ld = _scalar_block(family, theta, x, y, a, b, params=False)
    if not ld.allowed[0, 0]:
        return 0.0, 0.0
    m = float(ld.mass()[0, 0])
    return m * float(ld.l_s[0, 0]) / a, m * float(ld.l_t[0, 0]) / b


def mf_grad_params(family: MatchingFamily, theta, x: int, y: int, a: float, b: float) -> np.ndarray:
    _, ld = _scalar_block(family, theta, x, y, a, b, params=True)
    if not ld.allowed[0, 0]:
        return np.zeros(family.theta_dim)
    return float(ld.mass()[0, 0]) * ld.l_theta[:, 0, 0]


def mf_ratio_form(family: MatchingFamily, x: int, y: int, a_ratio: float, b_ratio: float) -> float:
    if not family.descriptor.has_theta_free_ratio:
        raise CapabilityError(f"family '{family.name}' has no parameter-free ratio form")
    if a_ratio <= 0 or b_ratio <= 0:
        raise DomainError("ratios must be strictly positive")
    ea, eb = family.ratio_exponents()
    return float(a_ratio ** ea[x, y] * b_ratio ** eb[x, y])

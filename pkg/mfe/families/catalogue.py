from __future__ import annotations

from typing import Any, Callable

import numpy as np

from mfe.errors import ConfigurationError
from mfe.families.base import MatchingFamily
from mfe.families.choo_siow import ChooSiow
from mfe.families.cobb_douglas import CobbDouglas
from mfe.families.design import SurplusDesign
from mfe.families.etu import EtuGkw, HarmonicMean
from mfe.families.menzel import Menzel
from mfe.families.search import SearchMatching
from mfe.models import FamilyConfig
from mfe.types import ParamVector, TypeSpace

Params = dict[str, Any]


def _type_values(params: Params, key: str, count: int) -> np.ndarray:
    if key in params:
        values = np.asarray(params[key], dtype=float)
        if values.shape != (count,):
            raise ConfigurationError(f"'{key}' needs {count} values, got {values.size}")
        return values
    return np.arange(1, count + 1, dtype=float) / count


def _type_pairs(params: Params, key: str, count: int) -> list[tuple[int, int]]:
    pairs = params.get(key)
    if pairs is None:
        raise ConfigurationError(f"the age-education design needs '{key}': one [age, education] pair per type")
    try:
        out = [(int(age), int(edu)) for age, edu in pairs]
    except (TypeError, ValueError):
        raise ConfigurationError(f"'{key}' must be a list of [age, education] pairs") from None
    if len(out) != count:
        raise ConfigurationError(f"'{key}' needs {count} pairs, got {len(out)}")
    return out


def _design(params: Params, key: str, space: TypeSpace, default: str, prefix: str) -> SurplusDesign:
    kind = params.get(key, default)
    if kind == "free":
        return SurplusDesign.free(space, prefix)
    if kind == "constant":
        return SurplusDesign.constant(space, prefix)
    if kind == "interaction":
        return SurplusDesign.interaction(
            _type_values(params, "x_values", space.nx), _type_values(params, "y_values", space.ny), prefix
        )
    if kind == "age-education":
        return SurplusDesign.age_education(
            _type_pairs(params, "x_types", space.nx),
            _type_pairs(params, "y_types", space.ny),
            None if key == "design" else prefix,
        )
    raise ConfigurationError(f"unknown design '{kind}' for {key}; expected free, constant, interaction or age-education")


def _mask(params: Params, key: str, space: TypeSpace) -> np.ndarray | None:
    if key not in params:
        return None
    mask = np.asarray(params[key], dtype=float)
    if mask.shape != space.shape:
        raise ConfigurationError(f"'{key}' must be a {space.nx}x{space.ny} table")
    return mask != 0


def _choo_siow(params: Params, space: TypeSpace) -> MatchingFamily:
    return ChooSiow(space, _design(params, "design", space, "free", "phi"), _mask(params, "allowed", space))


def _menzel(params: Params, space: TypeSpace) -> MatchingFamily:
    return Menzel(space, _design(params, "design", space, "free", "phi"), _mask(params, "allowed", space))


def _search(params: Params, space: TypeSpace) -> MatchingFamily:
    return SearchMatching(space, _mask(params, "acceptance", space))


def _etu(params: Params, space: TypeSpace) -> MatchingFamily:
    return EtuGkw(
        space,
        params.get("tau", 1.0),
        _design(params, "alpha_design", space, "interaction", "alpha"),
        _design(params, "gamma_design", space, "interaction", "gamma"),
        _mask(params, "allowed", space),
    )


def _harmonic_mean(params: Params, space: TypeSpace) -> MatchingFamily:
    return HarmonicMean(
        space,
        _design(params, "alpha_design", space, "interaction", "alpha"),
        _design(params, "gamma_design", space, "interaction", "gamma"),
        _mask(params, "allowed", space),
    )


def _cobb_douglas(params: Params, space: TypeSpace) -> MatchingFamily:
    return CobbDouglas(
        space,
        _design(params, "design", space, "free", "phi"),
        params.get("exponent_a", 0.5),
        params.get("exponent_b", 0.5),
        params.get("psi"),
        params.get("Psi"),
        _mask(params, "allowed", space),
    )


FAMILY_BUILDERS: dict[str, Callable[[Params, TypeSpace], MatchingFamily]] = {
    "choo-siow": _choo_siow,
    "menzel": _menzel,
    "search": _search,
    "etu": _etu,
    "harmonic-mean": _harmonic_mean,
    "cobb-douglas": _cobb_douglas,
}


def available_families() -> list[str]:
    return sorted(FAMILY_BUILDERS.keys())


def build_family(config: FamilyConfig, space: TypeSpace) -> MatchingFamily:
    key = config.name.strip().lower()
    builder = FAMILY_BUILDERS.get(key)
    if builder is None:
        raise ConfigurationError(f"unknown family '{config.name}'; choose from {', '.join(available_families())}")
    return builder(config.params, space)


def initial_theta(family: MatchingFamily, config: FamilyConfig) -> ParamVector:
    """theta from the config block, else a neutral starting point for the family."""
    if "theta" in config.params:
        return family.params(config.params["theta"])
    values = np.zeros(family.theta_dim)
    if isinstance(family, SearchMatching):
        values[0] = float(config.params.get("rho_over_delta", 1.0))
    elif isinstance(family, HarmonicMean):
        values[-1] = 1.0
    return family.params(values)

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from mfe.estimation import ObservedData
from mfe.families import ChooSiow, CobbDouglas, EtuGkw, HarmonicMean, Menzel, SearchMatching, SurplusDesign
from mfe.io import load_matching_csv
from mfe.models import SolverOptions
from mfe.types import Market, TypeSpace

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
TIGHT = SolverOptions(tol=1e-12)


def make_family(name: str, space: TypeSpace, rng: np.random.Generator):
    """A catalogued family on `space` with a non-trivial theta."""
    nx, ny = space.shape
    x = np.linspace(0.2, 1.0, nx)
    y = np.linspace(0.1, 0.9, ny)
    if name == "choo-siow":
        return ChooSiow(space, SurplusDesign.free(space)), rng.normal(0.0, 0.5, nx * ny)
    if name == "menzel":
        return Menzel(space, SurplusDesign.free(space)), rng.normal(0.0, 0.5, nx * ny)
    if name == "search":
        acceptance = np.ones(space.shape)
        acceptance[0, -1] = 0.0
        return SearchMatching(space, acceptance), np.array([0.7])
    if name == "etu":
        tau = rng.uniform(0.5, 2.0, space.shape)
        family = EtuGkw(space, tau, SurplusDesign.interaction(x, y, "alpha"), SurplusDesign.interaction(x, y, "gamma"))
        return family, np.array([0.5, 0.3])
    if name == "harmonic-mean":
        family = HarmonicMean(space, SurplusDesign.interaction(x, y, "alpha"), SurplusDesign.interaction(x, y, "gamma"))
        return family, np.array([0.5, 0.3, 0.8])
    if name == "cobb-douglas":
        family = CobbDouglas(
            space,
            SurplusDesign.free(space),
            0.25,
            0.75,
            psi=np.linspace(0.0, 0.4, nx),
            Psi=np.linspace(0.1, 0.3, ny),
        )
        return family, rng.normal(0.0, 0.5, nx * ny)
    raise KeyError(name)


FAMILY_NAMES = ["choo-siow", "menzel", "search", "etu", "harmonic-mean", "cobb-douglas"]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def space_1x1() -> TypeSpace:
    return TypeSpace(("x",), ("y",))


@pytest.fixture
def unit_market(space_1x1) -> Market:
    return Market(space_1x1, [1.0], [1.0])


@pytest.fixture
def edu_observed() -> ObservedData:
    return load_matching_csv(FIXTURES / "edu3x3.csv")


@pytest.fixture
def edu_path() -> Path:
    return FIXTURES / "edu3x3.csv"


@pytest.fixture
def aid_path() -> Path:
    return FIXTURES / "edu3x3_aid.csv"

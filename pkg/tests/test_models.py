import pytest
from pydantic import ValidationError

from mfe.errors import ConfigurationError
from mfe.families import available_families, build_family
from mfe.families.design import age_education_names
from mfe.models import FamilyConfig, RunConfig, SolverOptions
from mfe.types import TypeSpace


def test_solver_options_defaults():
    opts = SolverOptions()
    assert opts.method == "ipfp"
    assert not opts.parallel
    assert opts.effective_inner_tol == min(opts.tol * 1e-2, 1e-12)
    assert SolverOptions(tol=1e-3).effective_inner_tol == 1e-12
    assert SolverOptions(tol=1e-8, inner_tol=1e-9).effective_inner_tol == 1e-9


@pytest.mark.parametrize("fields", [{"tol": 0.0}, {"max_outer_iter": 0}, {"tol": 1e-9, "inner_tol": 1e-6}, {"speed": 2}])
def test_solver_options_rejects(fields):
    with pytest.raises(ValidationError):
        SolverOptions(**fields)


def test_solver_options_frozen():
    with pytest.raises(ValidationError):
        SolverOptions().tol = 1.0


def test_run_config_requirements():
    assert RunConfig(command="simulate").sizes == [10]
    with pytest.raises(ValidationError, match="matching"):
        RunConfig(command="fit")
    with pytest.raises(ValidationError, match="new-margins"):
        RunConfig(command="counterfactual", matching="m.csv")
    with pytest.raises(ValidationError):
        RunConfig(command="simulate", sizes=[0])


def test_catalogue():
    assert available_families() == sorted(["choo-siow", "menzel", "search", "etu", "harmonic-mean", "cobb-douglas"])
    space = TypeSpace.of_size(2, 2)
    assert build_family(FamilyConfig(name=" ETU "), space).name == "etu"
    with pytest.raises(ConfigurationError, match="unknown family"):
        build_family(FamilyConfig(name="gale-shapley"), space)
    with pytest.raises(ConfigurationError, match="unknown design"):
        build_family(FamilyConfig(name="choo-siow", params={"design": "spline"}), space)


def test_catalogue_age_education_design():
    space = TypeSpace.of_size(2, 2)
    params = {"design": "age-education", "x_types": [[1, 1], [2, 3]], "y_types": [[1, 2], [3, 1]]}
    family = build_family(FamilyConfig(name="choo-siow", params=params), space)
    assert family.theta_dim == len(age_education_names())

    short = {**params, "y_types": [[1, 2]]}
    with pytest.raises(ConfigurationError, match="y_types"):
        build_family(FamilyConfig(name="choo-siow", params=short), space)
    with pytest.raises(ConfigurationError, match="x_types"):
        build_family(FamilyConfig(name="choo-siow", params={"design": "age-education"}), space)

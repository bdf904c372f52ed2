import numpy as np
import pytest

from conftest import TIGHT, make_family
from mfe.counterfactual import (
    counterfactual,
    counterfactual_parameter_free,
    counterfactual_parametric,
    summary_by_cell,
)
from mfe.equilibrium import solve_ipfp
from mfe.errors import CapabilityError, DomainError
from mfe.estimation import ObservedData, surplus_nonparametric_cs
from mfe.families import ChooSiow, Menzel, SurplusDesign
from mfe.io import load_margins_csv
from mfe.types import Market, Matching, TypeSpace


@pytest.fixture
def choo_1x1(space_1x1):
    return ChooSiow(space_1x1, SurplusDesign.free(space_1x1))


@pytest.fixture
def half_matching(space_1x1):
    return Matching(space_1x1, [[0.5]], [0.5], [0.5])


def _all_ratios(result):
    r = result.ratios
    return np.concatenate([r.mu_xy.ravel(), r.mu_x0, r.mu_0y])


def test_parametric_same_market_gives_unit_ratios(rng):
    space = TypeSpace.of_size(3, 4)
    family, theta = make_family("etu", space, rng)
    market = Market(space, rng.uniform(0.5, 2.0, 3), rng.uniform(0.5, 2.0, 4))
    result = counterfactual_parametric(family, theta, market, TIGHT, baseline_market=market)
    assert result.method == "parametric"
    assert result.converged
    np.testing.assert_allclose(_all_ratios(result), 1.0, rtol=1e-9)


def test_parametric_doubling_degree_one(rng):
    space = TypeSpace.of_size(3, 4)
    family, theta = make_family("harmonic-mean", space, rng)
    market = Market(space, rng.uniform(0.5, 2.0, 3), rng.uniform(0.5, 2.0, 4))
    doubled = Market(space, 2 * market.n, 2 * market.m)
    result = counterfactual_parametric(family, theta, doubled, TIGHT, baseline_market=market)
    np.testing.assert_allclose(_all_ratios(result), 2.0, rtol=1e-8)
    np.testing.assert_allclose(result.ratios.n, 2.0)


def test_parameter_free_unchanged_margins(choo_1x1, half_matching, space_1x1):
    result = counterfactual_parameter_free(half_matching, Market(space_1x1, [1.0], [1.0]), choo_1x1, TIGHT)
    assert result.method == "parameter_free"
    assert result.converged
    np.testing.assert_allclose(_all_ratios(result), 1.0, atol=1e-12)


def test_parameter_free_doubling(choo_1x1, half_matching, space_1x1):
    result = counterfactual_parameter_free(half_matching, Market(space_1x1, [2.0], [2.0]), choo_1x1, TIGHT)
    np.testing.assert_allclose(_all_ratios(result), 2.0, rtol=1e-10)
    np.testing.assert_allclose(result.new_matching.to_vector(), [1.0, 1.0, 1.0], rtol=1e-10)


def test_parameter_free_matches_parametric_on_fixture(edu_observed, aid_path):
    new_market = load_margins_csv(aid_path, edu_observed.space)
    family, phi_hat = ChooSiow.from_surplus(surplus_nonparametric_cs(edu_observed))

    free = counterfactual_parameter_free(edu_observed, new_market, family, TIGHT)
    parametric = counterfactual_parametric(family, phi_hat, new_market, TIGHT, baseline_market=edu_observed.market)
    assert free.converged and parametric.converged

    # The fitted surplus reproduces the baseline exactly.
    np.testing.assert_allclose(parametric.baseline.to_vector(), edu_observed.matching.to_vector(), rtol=1e-7)
    np.testing.assert_allclose(free.new_matching.to_vector(), parametric.new_matching.to_vector(), rtol=1e-7)

    hs, col = 0, 1
    assert free.ratios.mu_xy[hs, hs] < 1.0
    assert free.ratios.mu_xy[col, col] > 1.0


def test_parameter_free_meets_new_margins(edu_observed, aid_path):
    new_market = load_margins_csv(aid_path, edu_observed.space)
    family = ChooSiow(edu_observed.space, SurplusDesign.free(edu_observed.space))
    result = counterfactual_parameter_free(edu_observed, new_market, family, TIGHT)
    n_new, m_new = result.new_matching.margins()
    np.testing.assert_allclose(n_new, new_market.n, rtol=1e-9)
    np.testing.assert_allclose(m_new, new_market.m, rtol=1e-9)


def test_menzel_ratio_form_matches_parametric(rng):
    space = TypeSpace.of_size(2, 3)
    baseline = Matching(space, rng.uniform(0.1, 0.4, (2, 3)), rng.uniform(0.3, 0.8, 2), rng.uniform(0.3, 0.8, 3))
    family = Menzel(space, SurplusDesign.free(space))
    theta = np.log(baseline.mu_xy / np.outer(baseline.mu_x0, baseline.mu_0y)).ravel()
    n, m = baseline.margins()
    new_market = Market(space, n * [1.2, 0.9], m * [1.0, 1.1, 0.8])

    free = counterfactual_parameter_free(baseline, new_market, family, TIGHT)
    parametric = counterfactual_parametric(family, theta, new_market, TIGHT, baseline_market=baseline.market())
    np.testing.assert_allclose(parametric.baseline.to_vector(), baseline.to_vector(), rtol=1e-9)
    np.testing.assert_allclose(free.new_matching.to_vector(), parametric.new_matching.to_vector(), rtol=1e-8)


def test_zero_baseline_cell_stays_zero():
    space = TypeSpace.of_size(2, 2)
    baseline = Matching(space, [[0.3, 0.0], [0.2, 0.4]], [0.5, 0.6], [0.7, 0.3])
    family = ChooSiow(space, SurplusDesign.free(space))
    n, m = baseline.margins()
    result = counterfactual_parameter_free(baseline, Market(space, 1.3 * n, m), family, TIGHT)
    assert result.ratios.mu_xy[0, 1] == 0.0
    assert result.new_matching.mu_xy[0, 1] == 0.0
    n_new, _ = result.new_matching.margins()
    np.testing.assert_allclose(n_new, 1.3 * n, rtol=1e-9)


def test_more_men_of_one_type(edu_observed):
    family = ChooSiow(edu_observed.space, SurplusDesign.free(edu_observed.space))
    n, m = edu_observed.matching.margins()
    bumped = n.copy()
    bumped[1] *= 1.1
    result = counterfactual_parameter_free(edu_observed, Market(edu_observed.space, bumped, m), family, TIGHT)
    assert np.all(result.ratios.mu_0y < 1.0)
    assert np.all(result.ratios.mu_x0 > 1.0)
    assert result.new_matching.mu_xy.sum() > edu_observed.matching.mu_xy.sum()


def test_family_without_ratio_form(rng, half_matching, space_1x1):
    family, _ = make_family("etu", space_1x1, rng)
    with pytest.raises(CapabilityError):
        counterfactual_parameter_free(half_matching, Market(space_1x1, [2.0], [2.0]), family)


def test_space_mismatch(choo_1x1, half_matching):
    other = TypeSpace(("p",), ("q",))
    with pytest.raises(DomainError):
        counterfactual_parameter_free(half_matching, Market(other, [1.0], [1.0]), choo_1x1)
    with pytest.raises(DomainError):
        counterfactual_parametric(choo_1x1, [0.0], Market(other, [1.0], [1.0]), baseline_market=half_matching.market())


def test_baseline_without_singles(choo_1x1, space_1x1):
    baseline = Matching(space_1x1, [[1.0]], [0.0], [0.5])
    with pytest.raises(DomainError, match="singles"):
        counterfactual_parameter_free(baseline, Market(space_1x1, [2.0], [2.0]), choo_1x1)


def test_summary_by_cell(choo_1x1, half_matching, space_1x1):
    result = counterfactual_parameter_free(half_matching, Market(space_1x1, [2.0], [2.0]), choo_1x1, TIGHT)
    rows = summary_by_cell(result)
    assert [(r["x"], r["y"]) for r in rows] == space_1x1.household_labels()
    for row in rows:
        assert row["baseline"] == pytest.approx(0.5)
        assert row["counterfactual"] == pytest.approx(1.0)
        assert row["change"] == pytest.approx(row["counterfactual"] - row["baseline"])


def test_counterfactual_dispatch(choo_1x1, half_matching, space_1x1):
    new_market = Market(space_1x1, [2.0], [2.0])
    free = counterfactual("parameter-free", choo_1x1, [0.0], half_matching, new_market, TIGHT)
    parametric = counterfactual("parametric", choo_1x1, [0.0], half_matching, new_market, TIGHT)
    assert free.method == "parameter_free"
    assert parametric.method == "parametric"
    # Phi = 0 reproduces the (0.5, 0.5, 0.5) baseline, so both routes agree.
    np.testing.assert_allclose(parametric.new_matching.to_vector(), free.new_matching.to_vector(), rtol=1e-9)


def test_ratio_ipfp_start_invariance(edu_observed, aid_path):
    new_market = load_margins_csv(aid_path, edu_observed.space)
    family = ChooSiow(edu_observed.space, SurplusDesign.free(edu_observed.space))
    default = counterfactual_parameter_free(edu_observed, new_market, family, TIGHT)
    ones = (np.ones(3), np.ones(3))
    from_ones = counterfactual_parameter_free(edu_observed, new_market, family, TIGHT, init=ones)
    assert default.converged and from_ones.converged
    np.testing.assert_allclose(_all_ratios(from_ones), _all_ratios(default), rtol=0, atol=10 * TIGHT.tol)


def test_ratio_ipfp_rejects_bad_start(choo_1x1, half_matching, space_1x1):
    with pytest.raises(DomainError, match="starting ratios"):
        counterfactual_parameter_free(half_matching, Market(space_1x1, [2.0], [2.0]), choo_1x1, init=([1.0], [0.0]))


def _random_choo_siow_case(seed):
    rng = np.random.default_rng(seed)
    nx, ny = int(rng.integers(1, 21)), int(rng.integers(1, 31))
    space = TypeSpace.of_size(nx, ny)
    family = ChooSiow(space, SurplusDesign.free(space))
    market = Market(space, rng.uniform(0.5, 2.0, nx), rng.uniform(0.5, 2.0, ny))
    baseline = solve_ipfp(family, rng.normal(0.0, 1.0, nx * ny), market, TIGHT).matching
    shifted = Market(space, market.n * rng.uniform(0.8, 1.25, nx), market.m * rng.uniform(0.8, 1.25, ny))
    return baseline, shifted


def _check_routes_agree(seed):
    baseline, shifted = _random_choo_siow_case(seed)
    family, phi_hat = ChooSiow.from_surplus(surplus_nonparametric_cs(ObservedData(baseline)))
    free = counterfactual_parameter_free(baseline, shifted, family, TIGHT)
    parametric = counterfactual_parametric(family, phi_hat, shifted, TIGHT, baseline_market=baseline.market())
    assert free.converged and parametric.converged
    gap = np.max(np.abs(free.new_matching.to_vector() - parametric.new_matching.to_vector())) / shifted.total
    assert gap <= 1e-8


@pytest.mark.parametrize("seed", range(10))
def test_routes_agree_on_random_markets(seed):
    _check_routes_agree(seed)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10, 110))
def test_routes_agree_on_many_random_markets(seed):
    _check_routes_agree(seed)

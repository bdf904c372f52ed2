import math

import numpy as np
import pytest

from conftest import FAMILY_NAMES, make_family
from mfe.errors import CapabilityError, ConfigurationError, DomainError
from mfe.families import (
    ChooSiow,
    CobbDouglas,
    EtuGkw,
    EtuParams,
    FamilyDescriptor,
    HarmonicMean,
    Menzel,
    SurplusDesign,
    age_education_names,
    available_families,
    build_family,
    etu_distance,
    initial_theta,
    mf_grad_params,
    mf_grad_unmatched,
    mf_ratio_form,
    mf_value,
    surplus_parametric,
)
from mfe.models import FamilyConfig
from mfe.types import TypeSpace


@pytest.fixture
def choo(space_1x1):
    return ChooSiow(space_1x1, SurplusDesign.free(space_1x1))


@pytest.fixture
def menzel(space_1x1):
    return Menzel(space_1x1, SurplusDesign.free(space_1x1))


@pytest.fixture
def harmonic(space_1x1):
    return HarmonicMean(space_1x1, SurplusDesign.constant(space_1x1, "alpha"), SurplusDesign.constant(space_1x1, "gamma"))


def test_choo_siow_values(choo):
    assert mf_value(choo, [0.0], 0, 0, 1.0, 1.0) == pytest.approx(1.0)
    assert mf_value(choo, [2.0], 0, 0, 4.0, 9.0) == pytest.approx(6 * math.e, rel=1e-12)
    assert mf_value(choo, [0.0], 0, 0, 4.0, 4.0) == pytest.approx(4 * mf_value(choo, [0.0], 0, 0, 1.0, 1.0))


def test_menzel_value(menzel):
    assert mf_value(menzel, [0.0], 0, 0, 0.5, 0.25) == pytest.approx(0.125)


def test_harmonic_mean_value(harmonic):
    assert mf_value(harmonic, [0.0, 0.0, 1.0], 0, 0, 1.0, 1.0) == pytest.approx(1.0)
    assert mf_value(harmonic, [0.0, 0.0, 1.0], 0, 0, 2.0, 3.0) == pytest.approx(2 * 2 * 3 / 5)


def test_etu_matches_distance_composition(rng):
    space = TypeSpace.of_size(2, 3)
    tau = rng.uniform(0.3, 3.0, space.shape)
    family = EtuGkw(space, tau, SurplusDesign.free(space, "alpha"), SurplusDesign.free(space, "gamma"))
    theta = rng.normal(size=12)
    params = family.params_at(theta)
    for _ in range(20):
        x, y = int(rng.integers(2)), int(rng.integers(3))
        a, b = rng.uniform(0.01, 5.0, 2)
        direct = math.exp(-etu_distance(params, x, y, -math.log(a), -math.log(b)))
        t, al, ga = params.tau[x, y], params.alpha[x, y], params.gamma[x, y]
        closed = (0.5 * (a ** (-1 / t) * math.exp(-al / t) + b ** (-1 / t) * math.exp(-ga / t))) ** (-t)
        value = mf_value(family, theta, x, y, a, b)
        assert value == pytest.approx(direct, rel=1e-12)
        assert value == pytest.approx(closed, rel=1e-12)


def test_grad_unmatched_examples(choo, menzel):
    np.testing.assert_allclose(mf_grad_unmatched(choo, [0.0], 0, 0, 0.25, 0.25), (0.5, 0.5))
    np.testing.assert_allclose(mf_grad_unmatched(menzel, [0.0], 0, 0, 2.0, 3.0), (3.0, 2.0))


def test_grad_params_examples(choo, space_1x1):
    np.testing.assert_allclose(mf_grad_params(choo, [0.0], 0, 0, 1.0, 1.0), [0.5])
    # exp(theta) * sqrt(ab): a Choo-Siow design with Phi = 2 theta
    design = SurplusDesign(np.zeros((1, 1)), np.full((1, 1, 1), 2.0), ("scale",))
    family = ChooSiow(space_1x1, design)
    m = mf_value(family, [0.3], 0, 0, 2.0, 5.0)
    np.testing.assert_allclose(mf_grad_params(family, [0.3], 0, 0, 2.0, 5.0), [m])


def test_scalar_api_domain_errors(choo):
    with pytest.raises(DomainError):
        mf_value(choo, [0.0], 0, 0, 0.0, 1.0)
    with pytest.raises(DomainError):
        mf_grad_unmatched(choo, [0.0], 0, 0, 1.0, -1.0)
    with pytest.raises(ConfigurationError):
        mf_value(choo, [0.0, 1.0], 0, 0, 1.0, 1.0)


def test_ratio_forms(choo, menzel, harmonic):
    assert mf_ratio_form(choo, 0, 0, 1.0, 1.0) == pytest.approx(1.0)
    assert mf_ratio_form(choo, 0, 0, 4.0, 9.0) == pytest.approx(6.0)
    assert mf_ratio_form(menzel, 0, 0, 2.0, 3.0) == pytest.approx(6.0)
    with pytest.raises(CapabilityError):
        mf_ratio_form(harmonic, 0, 0, 2.0, 3.0)


def test_ratio_form_is_theta_free(rng):
    space = TypeSpace.of_size(2, 2)
    for name in ("choo-siow", "menzel", "cobb-douglas"):
        family, theta = make_family(name, space, rng)
        a, b = rng.uniform(0.2, 2.0, 2), rng.uniform(0.2, 2.0, 2)
        ra, rb = rng.uniform(0.5, 3.0, 2), rng.uniform(0.5, 3.0, 2)
        shifted = family.value(theta, ra * a, rb * b)
        np.testing.assert_allclose(shifted, family.ratio(ra, rb) * family.value(theta, a, b), rtol=1e-12)


def test_etu_distance_examples(rng):
    zero = EtuParams(np.ones((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    assert etu_distance(zero, 0, 0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert etu_distance(zero, 0, 0, 1.0, 1.0) == pytest.approx(1.0)
    params = EtuParams(rng.uniform(0.2, 3.0, (1, 1)), rng.normal(size=(1, 1)), rng.normal(size=(1, 1)))
    u, v, c = rng.normal(size=3)
    assert etu_distance(params, 0, 0, u + c, v + c) == pytest.approx(etu_distance(params, 0, 0, u, v) + c, abs=1e-12)


def test_etu_params_reject_nonpositive_tau():
    with pytest.raises(DomainError):
        EtuParams(np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))


def test_surplus_parametric_terms():
    names = age_education_names()
    assert len(names) == 184
    theta = np.arange(1.0, 185.0)
    idx = {n: i for i, n in enumerate(names)}
    expected = sum(theta[idx[k]] for k in ("theta0", "ma6", "me2", "wa8", "we3", "mwa2", "mwe1"))
    assert surplus_parametric(theta, (6, 2), (8, 3)) == expected
    assert surplus_parametric(theta, (1, 1), (1, 1)) == theta[0]
    assert surplus_parametric(np.zeros(184), (40, 3), (12, 1)) == 0.0


@pytest.mark.parametrize("x, y", [((61, 1), (1, 1)), ((1, 4), (1, 1)), ((1, 1), (0, 2))])
def test_surplus_parametric_range(x, y):
    with pytest.raises(DomainError):
        surplus_parametric(np.zeros(184), x, y)


def test_age_education_design_matches_scalar(rng):
    x_types = [(1, 1), (6, 2), (30, 3)]
    y_types = [(8, 3), (1, 1)]
    design = SurplusDesign.age_education(x_types, y_types)
    theta = rng.normal(size=184)
    phi = design.phi(theta)
    for i, xt in enumerate(x_types):
        for j, yt in enumerate(y_types):
            assert phi[i, j] == pytest.approx(surplus_parametric(theta, xt, yt), rel=1e-12)


def _fd(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_unmatched_gradient_against_finite_differences(name, rng):
    space = TypeSpace.of_size(2, 3)
    family, theta = make_family(name, space, rng)
    a, b = rng.uniform(0.2, 2.0, 2), rng.uniform(0.2, 2.0, 3)
    for x in range(2):
        for y in range(3):
            ga, gb = mf_grad_unmatched(family, theta, x, y, a[x], b[y])
            fa = _fd(lambda v: mf_value(family, theta, x, y, v, b[y]), a[x], 1e-6 * a[x])
            fb = _fd(lambda v: mf_value(family, theta, x, y, a[x], v), b[y], 1e-6 * b[y])
            assert ga == pytest.approx(fa, rel=1e-6, abs=1e-12)
            assert gb == pytest.approx(fb, rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_param_gradient_against_finite_differences(name, rng):
    space = TypeSpace.of_size(2, 3)
    family, theta = make_family(name, space, rng)
    a, b = rng.uniform(0.2, 2.0, 2), rng.uniform(0.2, 2.0, 3)
    grad = family.grad_params(theta, a, b)
    for k in range(theta.size):
        step = np.zeros_like(theta)
        step[k] = 1e-6
        fd = (family.value(theta + step, a, b) - family.value(theta - step, a, b)) / 2e-6
        np.testing.assert_allclose(grad[k], fd, rtol=1e-6, atol=1e-10)


@pytest.mark.parametrize("name", ["etu", "harmonic-mean"])
def test_second_log_derivatives_against_finite_differences(name, rng):
    space = TypeSpace.of_size(2, 3)
    family, theta = make_family(name, space, rng)
    a, b = rng.uniform(0.2, 2.0, 2), rng.uniform(0.2, 2.0, 3)
    full = family.bind(theta).log_derivatives(a, b, params=True, second=True)
    h = 1e-6

    def first(th, aa=a, bb=b):
        return family.bind(th).log_derivatives(aa, bb, params=True)

    for k in range(theta.size):
        step = np.zeros_like(theta)
        step[k] = h
        up, down = first(theta + step), first(theta - step)
        np.testing.assert_allclose(full.l_theta_theta[:, k], (up.l_theta - down.l_theta) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(full.l_s_theta[k], (up.l_s - down.l_s) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(full.l_t_theta[k], (up.l_t - down.l_t) / (2 * h), atol=1e-7)

    up, down = first(theta, a * np.exp(h)), first(theta, a * np.exp(-h))
    np.testing.assert_allclose(full.l_ss, (up.l_s - down.l_s) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(full.l_st, (up.l_t - down.l_t) / (2 * h), atol=1e-7)
    up, down = first(theta, a, b * np.exp(h)), first(theta, a, b * np.exp(-h))
    np.testing.assert_allclose(full.l_tt, (up.l_t - down.l_t) / (2 * h), atol=1e-7)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_isotone_and_vanishing(name, rng):
    space = TypeSpace.of_size(2, 3)
    family, theta = make_family(name, space, rng)
    grid = np.geomspace(1e-3, 10.0, 40)
    b = rng.uniform(0.2, 2.0, 3)
    values = np.array([family.value(theta, np.array([v, v]), b) for v in grid])
    assert np.all(np.diff(values, axis=0) >= -1e-14)
    tiny = family.value(theta, np.array([1.0, 1.0]), np.full(3, 1e-12))
    assert np.all(tiny < 1e-5)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_degree_one_homogeneity(name, rng):
    space = TypeSpace.of_size(2, 3)
    family, theta = make_family(name, space, rng)
    if not family.descriptor.homogeneous_degree_one:
        pytest.skip(f"{name} is not degree-1 homogeneous")
    bound = family.bind(theta)
    for _ in range(50):
        a, b = rng.uniform(0.01, 5.0, 2), rng.uniform(0.01, 5.0, 3)
        lam = rng.uniform(0.1, 10.0)
        np.testing.assert_allclose(bound.value(lam * a, lam * b), lam * bound.value(a, b), rtol=1e-12)


@pytest.mark.parametrize("name", FAMILY_NAMES)
def test_separability(name, rng):
    space = TypeSpace.of_size(2, 3)
    family, theta = make_family(name, space, rng)
    if not family.descriptor.separable_in_parameters:
        pytest.skip(f"{name} is not separable")
    other = theta * 1.3 + 0.1
    ratios = []
    for _ in range(10):
        a, b = rng.uniform(0.1, 3.0, 2), rng.uniform(0.1, 3.0, 3)
        live = family.allowed
        ratios.append(family.value(theta, a, b)[live] / family.value(other, a, b)[live])
    ratios = np.array(ratios)
    np.testing.assert_allclose(ratios, np.broadcast_to(ratios[0], ratios.shape), rtol=1e-12)


def test_descriptors():
    space = TypeSpace.of_size(2, 2)
    rng = np.random.default_rng(0)
    flags = {name: make_family(name, space, rng)[0].descriptor for name in FAMILY_NAMES}
    assert flags["choo-siow"].homogeneous_degree_one and flags["choo-siow"].has_theta_free_ratio
    assert flags["menzel"].homogeneous_degree == 2.0 and not flags["menzel"].homogeneous_degree_one
    assert flags["etu"].homogeneous_degree_one and not flags["etu"].has_theta_free_ratio
    assert flags["harmonic-mean"].theta_dim == 3
    assert flags["cobb-douglas"].homogeneous_degree_one


def test_descriptor_invariant():
    with pytest.raises(ConfigurationError):
        FamilyDescriptor("bad", 1, None, True, True)
    with pytest.raises(ConfigurationError):
        FamilyDescriptor("bad", 1, 1.0, False, True)


def test_cobb_douglas_without_common_degree_has_no_ratio():
    space = TypeSpace.of_size(2, 2)
    family = CobbDouglas(space, SurplusDesign.free(space), [[0.5, 0.3], [0.5, 0.5]], 0.5)
    assert family.descriptor.homogeneous_degree is None
    with pytest.raises(CapabilityError):
        family.ratio_exponents()


def test_cobb_douglas_rejects_bad_peer_effects():
    space = TypeSpace.of_size(1, 1)
    with pytest.raises(ConfigurationError):
        CobbDouglas(space, SurplusDesign.free(space), 0.5, 0.5, psi=[1.5], Psi=[0.6])


def test_search_acceptance_mask():
    space = TypeSpace.of_size(2, 2)
    family = build_family(FamilyConfig(name="search", params={"acceptance": [[1, 0], [1, 1]]}), space)
    value = family.value([2.0], np.ones(2), np.ones(2))
    np.testing.assert_array_equal(value, [[2.0, 0.0], [2.0, 2.0]])
    with pytest.raises(DomainError):
        family.bind([-1.0])


def test_catalogue():
    assert available_families() == ["choo-siow", "cobb-douglas", "etu", "harmonic-mean", "menzel", "search"]
    space = TypeSpace.of_size(2, 3)
    for name in available_families():
        family = build_family(FamilyConfig(name=name), space)
        theta = initial_theta(family, FamilyConfig(name=name))
        assert len(theta) == family.theta_dim
        assert np.all(np.isfinite(family.value(theta, np.ones(2), np.ones(3))))
    with pytest.raises(ConfigurationError, match="unknown family"):
        build_family(FamilyConfig(name="gravity"), space)
    with pytest.raises(ConfigurationError):
        build_family(FamilyConfig(name="choo-siow", params={"design": "spline"}), space)


def test_catalogue_theta_from_config():
    space = TypeSpace.of_size(1, 2)
    config = FamilyConfig(name="choo-siow", params={"design": "constant", "theta": [0.4]})
    family = build_family(config, space)
    theta = initial_theta(family, config)
    assert theta.names == ("phi",)
    assert theta.values.tolist() == [0.4]

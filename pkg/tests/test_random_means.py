import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from wdiffuse.errors import ParameterError
from wdiffuse.random_means import (RandomMeansLaw, envelope_constants, log_vartheta,
                                   log_vartheta_logs, sample_random_mean, theta_cdf,
                                   theta_cdf_oscillatory, vartheta, vartheta_envelope)
from wdiffuse.stats import ks_one_sample, ks_two_sample

betas = st.floats(0.02, 0.98)
unit = st.floats(1e-4, 1 - 1e-4)


def stick_breaking_means(beta, rng, n, sticks=400):
    """Random means of Dirichlet processes built from GEM weights and uniform atoms."""
    v = rng.beta(1.0, beta, size=(n, sticks))
    left = np.cumprod(1.0 - v, axis=1)
    w = v * np.concatenate([np.ones((n, 1)), left[:, :-1]], axis=1)
    atoms = rng.random((n, sticks + 1))
    return (w * atoms[:, :-1]).sum(axis=1) + left[:, -1] * atoms[:, -1]


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.9])
def test_first_two_moments(beta):
    # mean 1/2 and variance Var(U) / (1 + beta) of a Dirichlet-process mean
    f = lambda x, p: x ** p * vartheta(x, beta)
    mass = integrate.quad(f, 0, 1, args=(0,), points=[0.5], limit=200)[0]
    m1 = integrate.quad(f, 0, 1, args=(1,), points=[0.5], limit=200)[0]
    m2 = integrate.quad(f, 0, 1, args=(2,), points=[0.5], limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert m1 == pytest.approx(0.5, abs=1e-9)
    assert m2 - 0.25 == pytest.approx(1.0 / (12.0 * (1.0 + beta)), abs=1e-9)


def test_density_vanishes_at_the_ends():
    assert vartheta(0.0, 0.5) == 0.0
    assert vartheta(1.0, 0.5) == 0.0


@given(unit, betas)
def test_symmetry(x, beta):
    assert vartheta(x, beta) == pytest.approx(vartheta(1 - x, beta), rel=1e-10)


@given(unit, betas)
def test_envelope(x, beta):
    lo, hi = vartheta_envelope(x, beta)
    v = vartheta(x, beta)
    assert lo * (1 - 1e-12) <= v <= hi * (1 + 1e-12)


def test_envelope_constants_formula():
    c, C = envelope_constants(0.5)
    assert c == pytest.approx(math.cos(math.pi / 4))
    assert C == pytest.approx(2.0 * (1 + 0.5 / math.e))


@pytest.mark.parametrize("beta", [0.2, 0.7])
def test_rule_and_adaptive_agree(beta):
    x = np.array([1e-3, 0.1, 0.37, 0.5, 0.81])
    np.testing.assert_allclose(vartheta(x, beta), vartheta(x, beta, method="adaptive"),
                               rtol=1e-9)
    np.testing.assert_allclose(theta_cdf(x, beta), theta_cdf(x, beta, method="adaptive"),
                               atol=1e-10)


@given(st.floats(0.01, 0.99), betas)
def test_cdf_derivative_is_density(x, beta):
    h = 1e-5
    fd = (theta_cdf(x + h, beta) - theta_cdf(x - h, beta)) / (2 * h)
    assert fd == pytest.approx(vartheta(x, beta), rel=1e-5, abs=1e-7)


@given(unit, betas)
def test_cdf_reflection(x, beta):
    assert theta_cdf(x, beta) + theta_cdf(1 - x, beta) == pytest.approx(1.0, abs=1e-12)


def test_cdf_is_monotone():
    x = np.linspace(0, 1, 2001)
    assert np.all(np.diff(theta_cdf(x, 0.4)) >= 0)


@pytest.mark.parametrize("x", [0.1, 0.35, 0.8])
def test_oscillatory_representation(x):
    osc = theta_cdf_oscillatory(x, 0.5)
    assert osc.value == pytest.approx(theta_cdf(x, 0.5), abs=1e-3)


def test_small_beta_is_nearly_uniform():
    x = np.linspace(0, 1, 101)
    assert np.max(np.abs(theta_cdf(x, 0.01) - x)) <= 0.05


@pytest.mark.parametrize("beta", [0.3, 0.8])
def test_log_density_paths(beta):
    z = np.concatenate([np.geomspace(1e-12, 1e-3, 40), np.linspace(0.01, 0.99, 50)])
    np.testing.assert_allclose(log_vartheta(z, beta), np.log(vartheta(z, beta)),
                               rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(log_vartheta_logs(np.log(z), np.log1p(-z), beta),
                               log_vartheta(z, beta), atol=1e-12)


def test_log_density_continuous_at_asymptote_switch():
    for beta in (0.1, 0.5, 0.9):
        eps = 1e-6 * np.array([1 - 1e-9, 1 + 1e-9])
        lv = log_vartheta(eps, beta)
        assert abs(lv[1] - lv[0]) < 1e-7


def test_sampler_against_stick_breaking(rng):
    beta = 0.5
    ours = sample_random_mean(beta, rng, size=20_000)
    ref = stick_breaking_means(beta, rng, 20_000)
    assert ks_two_sample(ours, ref).passes(0.01)


def test_sampler_one_sample_ks(rng):
    x = sample_random_mean(0.3, rng, size=50_000)
    assert ks_one_sample(x, lambda v: theta_cdf(v, 0.3)).passes(0.01)


def test_table_sampling(rng):
    law = RandomMeansLaw(0.6).with_table(1024)
    x = law.sample(rng, size=20_000, method="table")
    assert ks_one_sample(x, law.cdf).passes(0.01)


def test_scalar_and_shape_handling(rng):
    assert isinstance(sample_random_mean(0.5, rng), float)
    assert sample_random_mean(0.5, rng, size=(3, 4)).shape == (3, 4)
    assert isinstance(vartheta(0.3, 0.5), float)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.2, 1.5])
def test_beta_outside_unit_interval(beta):
    with pytest.raises(ParameterError):
        vartheta(0.5, beta)


def test_points_outside_support():
    with pytest.raises(ParameterError):
        theta_cdf(1.5, 0.5)

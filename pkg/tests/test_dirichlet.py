import numpy as np
import pytest
from scipy import stats as sps
from scipy.special import digamma, polygamma

from wdiffuse.dirichlet import (GridPath, log_gamma_variates, sample_entropic,
                                sample_grid_marginals, sample_mk, sample_rho_tilde)
from wdiffuse.errors import ParameterError
from wdiffuse.measures import StepQuantile
from wdiffuse.random_means import theta_cdf
from wdiffuse.stats import StreamKey, derive_stream, ks_one_sample, ks_two_sample


def stick_breaking_paths(beta, rng, n, sticks=400):
    """Weights and atoms of truncated stick-breaking Dirichlet processes."""
    v = rng.beta(1.0, beta, size=(n, sticks))
    left = np.cumprod(1.0 - v, axis=1)
    w = v * np.concatenate([np.ones((n, 1)), left[:, :-1]], axis=1)
    w[:, -1] += left[:, -1]
    return w, rng.random((n, sticks))


def path_values(w, atoms, t):
    return np.stack([(w * (atoms <= s)).sum(axis=1) for s in t], axis=1)


def cell_averages(w, atoms, k):
    return np.stack([k * (w * np.clip(i / k - atoms, 0.0, 1.0 / k)).sum(axis=1)
                     for i in range(1, k + 1)], axis=1)


@pytest.mark.parametrize("shape", [0.3, 2.5])
def test_gamma_variates_distribution(shape, rng):
    g = np.exp(log_gamma_variates(shape, rng, 20_000))
    assert ks_one_sample(g, sps.gamma(shape).cdf).passes(0.01)


def test_gamma_variates_tiny_shape_log_moments(rng):
    a = 1e-3
    lg = log_gamma_variates(a, rng, 200_000)
    assert np.all(np.isfinite(lg))
    se = np.sqrt(polygamma(1, a) / lg.size)
    assert abs(lg.mean() - digamma(a)) < 4 * se


def test_gamma_shape_floor(rng):
    with pytest.raises(ParameterError):
        log_gamma_variates(1e-13, rng, 3)


@pytest.mark.parametrize("t", [0.5, 0.2])
def test_grid_marginal_is_beta(t, rng):
    beta = 0.7
    path = sample_grid_marginals([t], beta, rng, size=20_000)
    marginal = sps.beta(beta * t, beta * (1 - t)).cdf
    assert ks_one_sample(path.values[:, 0], marginal).passes(0.01)


def test_grid_increments_have_beta_laws(rng):
    # the mass D(s, t] of a Dirichlet process is Beta(beta (t - s), beta (1 - t + s))
    beta, t = 2.0, np.array([0.25, 0.5, 0.75])
    g = sample_grid_marginals(t, beta, rng, size=20_000).values
    assert np.all(np.diff(g, axis=1) >= 0)
    for lo, hi, width in [(None, 0, 0.25), (0, 2, 0.5), (1, 2, 0.25)]:
        inc = g[:, hi] - (0.0 if lo is None else g[:, lo])
        law = sps.beta(beta * width, beta * (1 - width)).cdf
        assert ks_one_sample(inc, law).passes(0.01)


def test_grid_path_validation():
    with pytest.raises(ParameterError):
        GridPath(np.array([0.5, 0.4]), np.array([0.1, 0.2]), 1.0)
    with pytest.raises(ParameterError):
        GridPath(np.array([0.2, 0.4]), np.array([0.3, 0.2]), 1.0)
    with pytest.raises(ParameterError):
        sample_grid_marginals([0.0, 0.5], 1.0, np.random.default_rng(0))


def test_mk_k1_is_random_mean(rng):
    x = sample_mk(0.5, 1, rng, size=20_000)[:, 0]
    assert ks_one_sample(x, lambda v: theta_cdf(v, 0.5)).passes(0.01)


@pytest.mark.parametrize("k", [2, 3])
def test_mk_against_stick_breaking_cell_averages(k, rng):
    beta = 0.8
    ours = sample_mk(beta, k, rng, size=20_000)
    w, atoms = stick_breaking_paths(beta, rng, 20_000)
    ref = cell_averages(w, atoms, k)
    for i in range(k):
        assert ks_two_sample(ours[:, i], ref[:, i]).passes(0.01)


def test_mk_points_are_ordered(rng):
    x = sample_mk(0.5, 4, rng, size=10_000)
    assert np.all(np.diff(x, axis=1) >= 0)
    assert np.all((x >= 0) & (x <= 1))


def test_mk_parameter_range(rng):
    with pytest.raises(ParameterError):
        sample_mk(2.0, 2, rng)
    with pytest.raises(ParameterError):
        sample_mk(0.5, 0, rng)


def test_rho_tilde_against_stick_breaking(rng):
    beta, k = 0.6, 3
    ours = sample_rho_tilde(beta, k, rng, size=20_000)
    w, atoms = stick_breaking_paths(beta, rng, 20_000)
    ref = path_values(w, atoms, (2 * np.arange(1, k + 1) - 1) / (2 * k))
    for i in range(k):
        assert ks_two_sample(ours[:, i], ref[:, i]).passes(0.01)


def test_entropic_path(rng):
    g = sample_entropic(0.5, 8, rng)
    assert isinstance(g, StepQuantile)
    assert g.values[0] == 0.0
    assert g(1.0) == 1.0
    np.testing.assert_allclose(g.breakpoints, np.arange(8) / 8)
    mids = np.array([sample_entropic(0.5, 8, rng).values[4] for _ in range(5000)])
    assert ks_one_sample(mids, sps.beta(0.25, 0.25).cdf).passes(0.01)
    with pytest.raises(ParameterError):
        sample_entropic(0.5, 6, rng)


def test_streams_reproduce():
    a = sample_mk(0.5, 2, derive_stream(StreamKey(5, 1)), size=50)
    b = sample_mk(0.5, 2, derive_stream(StreamKey(5, 1)), size=50)
    c = sample_mk(0.5, 2, derive_stream(StreamKey(5, 2)), size=50)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)

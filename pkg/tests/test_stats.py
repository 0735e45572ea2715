import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from wdiffuse.errors import ParameterError
from wdiffuse.stats import (StreamKey, chi2_grid_test, derive_stream, ecdf, ks_one_sample,
                            ks_two_sample, mc_mean_stderr)

samples = st.lists(st.floats(-1e3, 1e3), min_size=30, max_size=80)


@given(samples, samples)
def test_two_sample_statistic_matches_scipy(a, b):
    assert ks_two_sample(a, b).statistic == pytest.approx(sps.ks_2samp(a, b).statistic,
                                                         abs=1e-12)


@given(samples)
def test_one_sample_statistic_matches_scipy(a):
    cdf = sps.norm(0, 300).cdf
    assert ks_one_sample(a, cdf).statistic == pytest.approx(sps.kstest(a, cdf).statistic,
                                                           abs=1e-12)


def test_critical_values():
    r = ks_two_sample(np.arange(100.0), np.arange(400.0))
    assert r.critical_values[0.01] == pytest.approx(1.628 * math.sqrt(500 / 40000))
    assert ks_one_sample(np.linspace(0, 1, 50), lambda x: x).passes(0.01)


def test_ks_rejects_short_or_bad_input():
    with pytest.raises(ParameterError):
        ks_two_sample(np.arange(5.0), np.arange(50.0))
    with pytest.raises(ParameterError):
        ks_one_sample(np.r_[np.arange(40.0), np.nan], lambda x: x)


def test_ecdf():
    x, f = ecdf([3.0, 1.0, 2.0])
    np.testing.assert_array_equal(x, [1, 2, 3])
    np.testing.assert_allclose(f, [1 / 3, 2 / 3, 1])


def test_chi2_matches_scipy():
    obs = np.array([18, 22, 31, 29])
    p = np.array([0.2, 0.2, 0.3, 0.3])
    res = chi2_grid_test(obs, p)
    ref = sps.chisquare(obs, p * obs.sum())
    assert res.statistic == pytest.approx(ref.statistic)
    assert res.dof == 3
    assert res.critical_value == pytest.approx(sps.chi2.ppf(0.99, 3))


def test_chi2_with_uncovered_mass_and_pooling():
    res = chi2_grid_test(np.array([50, 30, 1]), np.array([0.5, 0.3, 0.005]), n_total=100)
    # two regular cells, the remainder cell (19 vs 19.5 expected), the pooled small cell
    assert res.cells == 4
    with pytest.raises(ParameterError):
        chi2_grid_test(np.array([1, 2]), np.array([0.7, 0.5]))


def test_streams():
    a = derive_stream(StreamKey(7, 3)).random(4)
    np.testing.assert_array_equal(a, derive_stream((7, 3)).random(4))
    assert not np.array_equal(a, derive_stream(StreamKey(7, 4)).random(4))
    assert not np.array_equal(a, derive_stream(StreamKey(8, 3)).random(4))
    assert StreamKey(7).child(9) == StreamKey(7, 9)
    with pytest.raises(ParameterError):
        StreamKey(-1)
    with pytest.raises(ParameterError):
        StreamKey(1.5)


def test_mean_stderr():
    m, se = mc_mean_stderr([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)

"""Random streams and the goodness-of-fit tests used by the verification suite."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .errors import ParameterError

__all__ = [
    "StreamKey",
    "derive_stream",
    "ecdf",
    "KSResult",
    "ks_two_sample",
    "ks_one_sample",
    "Chi2Result",
    "chi2_grid_test",
    "mc_mean_stderr",
    "KS_COEFFICIENTS",
]

# Asymptotic Kolmogorov distribution quantiles c(alpha).
KS_COEFFICIENTS = {0.05: 1.358, 0.01: 1.628}
MIN_KS_SAMPLES = 30

_U64 = 1 << 64


@dataclass(frozen=True)
class StreamKey:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= v < _U64):
                raise ParameterError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def child(self, stream_id):
        return StreamKey(self.seed, stream_id)


def derive_stream(key):
    """Counter-based generator for ``key``: Philox keyed by ``(stream_id, seed)``.

    The stream depends on nothing but the key, so work split across threads
    or processes draws the same numbers however it is scheduled.
    """
    if not isinstance(key, StreamKey):
        key = StreamKey(*key)
    bitgen = np.random.Philox(key=(int(key.stream_id) << 64) | int(key.seed))
    return np.random.Generator(bitgen)


def ecdf(samples):
    """Sorted sample and its right-continuous empirical CDF values ``i/n``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    return x, np.arange(1, x.size + 1) / x.size


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical_values: dict
    n: int
    m: int = 0

    def passes(self, level=0.01):
        return self.statistic <= self.critical_values[level]

    def as_dict(self):
        return {"statistic": self.statistic, "n": self.n, "m": self.m,
                "critical_values": {str(k): v for k, v in self.critical_values.items()}}


def _sample(a, name):
    a = np.asarray(a, dtype=float).ravel()
    if a.size < MIN_KS_SAMPLES:
        raise ParameterError(f"{name} needs at least {MIN_KS_SAMPLES} samples, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains non-finite values")
    return np.sort(a)


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov statistic with asymptotic critical values."""
    a = _sample(a, "a")
    b = _sample(b, "b")
    n, m = a.size, b.size
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / n
    fb = np.searchsorted(b, pts, side="right") / m
    stat = float(np.max(np.abs(fa - fb)))
    scale = math.sqrt((n + m) / (n * m))
    return KSResult(stat, {lv: c * scale for lv, c in KS_COEFFICIENTS.items()}, n, m)


def ks_one_sample(a, cdf):
    """One-sample KS statistic of ``a`` against the vectorized CDF ``cdf``."""
    a = _sample(a, "a")
    n = a.size
    f = np.asarray(cdf(a), dtype=float)
    hi = np.arange(1, n + 1) / n - f
    lo = f - np.arange(n) / n
    stat = float(max(hi.max(), lo.max()))
    scale = 1.0 / math.sqrt(n)
    return KSResult(stat, {lv: c * scale for lv, c in KS_COEFFICIENTS.items()}, n)


@dataclass(frozen=True)
class Chi2Result:
    statistic: float
    dof: int
    critical_value: float
    level: float
    cells: int

    @property
    def passed(self):
        return self.statistic <= self.critical_value


def chi2_grid_test(observed, probabilities, n_total=None, level=0.01, min_expected=5.0):
    """Pearson chi-square test of cell counts against cell probabilities.

    When the listed cells do not cover the whole sample space, pass the full
    sample size as ``n_total``: the uncovered count ``n_total - sum(observed)``
    and mass ``1 - sum(probabilities)`` then form one extra cell.  Cells with
    expected count below ``min_expected`` are pooled together.
    """
    obs = np.asarray(observed, dtype=float).ravel()
    p = np.asarray(probabilities, dtype=float).ravel()
    if obs.shape != p.shape:
        raise ParameterError("observed and probabilities must have the same shape")
    if np.any(p < 0) or p.sum() > 1 + 1e-9:
        raise ParameterError("cell probabilities must be nonnegative and sum to at most 1")
    n = obs.sum() if n_total is None else float(n_total)
    if n < obs.sum():
        raise ParameterError("n_total is smaller than the observed count")
    if n_total is not None:
        obs = np.append(obs, n - obs.sum())
        p = np.append(p, max(1.0 - p.sum(), 0.0))
    expected = n * p
    small = expected < min_expected
    o = obs[~small]
    e = expected[~small]
    if small.any() and expected[small].sum() > 0:
        o = np.append(o, obs[small].sum())
        e = np.append(e, expected[small].sum())
    stat = float(np.sum((o - e) ** 2 / e))
    dof = max(e.size - 1, 1)
    return Chi2Result(stat, dof, float(chi2.ppf(1.0 - level, dof)), level, int(e.size))


def mc_mean_stderr(values):
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise ParameterError("need at least two values for a standard error")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))

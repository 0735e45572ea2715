"""Quantile functions, measures on [0, 1] and the maps between them.

Two concrete measure types cover everything the particle systems produce:
atomic measures (equal-weight empirical measures being the main case) and
histograms with uniform mass inside each bin.  Their quantile functions are
step functions and continuous piecewise-linear functions respectively, and the
L2-Wasserstein distance is the L2 distance of quantile functions, which is
integrated exactly here.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "StepQuantile",
    "LinearQuantile",
    "AtomicMeasure",
    "EmpiricalMeasure",
    "HistogramMeasure",
    "chi",
    "chi_inverse",
    "hat_function",
    "stieltjes_hat",
    "project_J",
    "embed_iota",
    "project_pi_P",
    "wasserstein_distance",
]


def _as_float_array(v, name):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} must be a finite 1-d array")
    return a


@dataclass(frozen=True)
class StepQuantile:
    """Right-continuous nondecreasing step function on ``[0, 1]``.

    ``g(t) = values[j]`` for ``breakpoints[j] <= t < breakpoints[j+1]`` (the
    last cell extends to one) and ``g(1) = 1``.  ``breakpoints[0]`` must be 0.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = _as_float_array(self.breakpoints, "breakpoints")
        v = _as_float_array(self.values, "values")
        if b.size != v.size:
            raise ParameterError("breakpoints and values must have equal length")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0) or b[-1] >= 1.0:
            raise ParameterError("breakpoints must increase from 0 and stay below 1")
        if np.any(np.diff(v) < 0) or v[0] < 0 or v[-1] > 1:
            raise ParameterError("values must be nondecreasing in [0, 1]")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def edges(self):
        return np.append(self.breakpoints, 1.0)

    @property
    def widths(self):
        return np.diff(self.edges)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        out = self.values[np.clip(idx, 0, self.values.size - 1)]
        out = np.where(t >= 1.0, 1.0, out)
        return float(out) if out.ndim == 0 else out

    def primitive(self, t):
        """``int_0^t g(s) ds``."""
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        cum = np.concatenate([[0.0], np.cumsum(self.values * self.widths)])
        idx = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1,
                      0, self.values.size - 1)
        out = cum[idx] + self.values[idx] * (t - self.breakpoints[idx])
        return float(out) if out.ndim == 0 else out

    def segment_ends(self, edges):
        """Values at the start and end of each sub-cell of a refining partition."""
        mid = 0.5 * (edges[:-1] + edges[1:])
        v = self(mid)
        return v, v


@dataclass(frozen=True)
class LinearQuantile:
    """Continuous-within-segments piecewise-linear quantile function.

    Knots ``t`` are nondecreasing from 0 to 1; a repeated knot is a jump.  On
    ``[t_j, t_(j+1)]`` with ``t_j < t_(j+1)`` the function runs linearly from
    ``values[j]`` to ``values[j+1]``.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = _as_float_array(self.knots, "knots")
        v = _as_float_array(self.values, "values")
        if t.size != v.size or t.size < 2:
            raise ParameterError("need at least two knots with matching values")
        if t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) < 0):
            raise ParameterError("knots must be nondecreasing from 0 to 1")
        if np.any(np.diff(v) < 0) or v[0] < 0 or v[-1] > 1:
            raise ParameterError("values must be nondecreasing in [0, 1]")
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "values", v)

    @property
    def edges(self):
        return np.unique(self.knots)

    def _segment(self, t):
        # index j of a segment with t_j <= t < t_(j+1), skipping degenerate ones
        j = np.searchsorted(self.knots, t, side="right") - 1
        return np.clip(j, 0, self.knots.size - 2)

    def _linear(self, j, t):
        t0, t1 = self.knots[j], self.knots[j + 1]
        v0, v1 = self.values[j], self.values[j + 1]
        span = np.where(t1 > t0, t1 - t0, 1.0)
        return v0 + (v1 - v0) * np.clip((t - t0) / span, 0.0, 1.0)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self._linear(self._segment(t), t)
        out = np.where(t >= 1.0, self.values[-1], out)
        return float(out) if out.ndim == 0 else out

    def primitive(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        dt = np.diff(self.knots)
        seg = 0.5 * (self.values[:-1] + self.values[1:]) * dt
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        j = self._segment(t)
        part = 0.5 * (self.values[j] + self._linear(j, t)) * (t - self.knots[j])
        out = cum[j] + part
        return float(out) if out.ndim == 0 else out

    def segment_ends(self, edges):
        mid = 0.5 * (edges[:-1] + edges[1:])
        j = self._segment(mid)
        return self._linear(j, edges[:-1]), self._linear(j, edges[1:])


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite combination of Dirac masses on ``[0, 1]``, atoms sorted."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = _as_float_array(self.atoms, "atoms")
        w = _as_float_array(self.weights, "weights")
        if a.size != w.size:
            raise ParameterError("atoms and weights must have equal length")
        if np.any(a < 0) or np.any(a > 1):
            raise ParameterError("atoms must lie in [0, 1]")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError("weights must be nonnegative and sum to one")
        order = np.argsort(a, kind="stable")
        object.__setattr__(self, "atoms", a[order])
        object.__setattr__(self, "weights", w[order])

    @property
    def mass(self):
        return float(self.weights.sum())

    def mean(self):
        return float(self.atoms @ self.weights)

    def cdf(self, s):
        s = np.asarray(s, dtype=float)
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cw[np.searchsorted(self.atoms, s, side="right")]


class EmpiricalMeasure(AtomicMeasure):
    """``(1/k) sum_i delta_{x_i}``."""

    def __init__(self, atoms):
        atoms = _as_float_array(atoms, "atoms")
        super().__init__(atoms, np.full(atoms.size, 1.0 / atoms.size))

    @property
    def k(self):
        return self.atoms.size

    def __repr__(self):
        return f"EmpiricalMeasure(atoms={self.atoms!r})"


@dataclass(frozen=True)
class HistogramMeasure:
    """Mass ``masses[j]`` spread uniformly over ``[edges[j], edges[j+1]]``."""

    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        e = _as_float_array(self.edges, "edges")
        m = _as_float_array(self.masses, "masses")
        if e.size != m.size + 1:
            raise ParameterError("need one more edge than masses")
        if np.any(np.diff(e) <= 0) or e[0] < 0 or e[-1] > 1:
            raise ParameterError("edges must increase inside [0, 1]")
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-9:
            raise ParameterError("masses must be nonnegative and sum to one")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "masses", m)

    @classmethod
    def uniform(cls, bins=1):
        return cls(np.linspace(0.0, 1.0, bins + 1), np.full(bins, 1.0 / bins))

    def cdf(self, s):
        s = np.asarray(s, dtype=float)
        return np.interp(s, self.edges, np.concatenate([[0.0], np.cumsum(self.masses)]))

    def mean(self):
        return float(self.masses @ (0.5 * (self.edges[:-1] + self.edges[1:])))


def chi(g):
    """Push-forward of Lebesgue measure on ``[0, 1]`` under the quantile ``g``.

    Step quantiles give atomic measures (an equal-cell step function gives an
    :class:`EmpiricalMeasure`); strictly increasing linear quantiles give
    histograms.
    """
    if isinstance(g, StepQuantile):
        w = g.widths
        if np.allclose(w, w[0], rtol=0, atol=1e-15):
            return EmpiricalMeasure(g.values)
        atoms, inverse = np.unique(g.values, return_inverse=True)
        return AtomicMeasure(atoms, np.bincount(inverse, weights=w))
    if isinstance(g, LinearQuantile):
        t, v = g.knots, g.values
        keep = np.diff(t) > 0
        if np.any(np.diff(v)[keep] <= 0):
            raise ParameterError("flat quantile segments (atoms) are not supported for histograms")
        vv = [v[0]]
        mm = []
        for j in np.flatnonzero(keep):
            if v[j] > vv[-1]:
                vv.append(v[j])
                mm.append(0.0)
            vv.append(v[j + 1])
            mm.append(t[j + 1] - t[j])
        return HistogramMeasure(np.array(vv), np.array(mm))
    raise ParameterError(f"chi is not defined for {type(g).__name__}")


def chi_inverse(mu):
    """Quantile function ``g(t) = inf{s : mu[0, s] > t}`` (``inf {} = 1``)."""
    if isinstance(mu, AtomicMeasure):
        keep = mu.weights > 0
        atoms, w = mu.atoms[keep], mu.weights[keep]
        if isinstance(mu, EmpiricalMeasure):
            starts = np.arange(atoms.size) / atoms.size
        else:
            starts = np.concatenate([[0.0], np.cumsum(w)[:-1]])
        return StepQuantile(starts, atoms)
    if isinstance(mu, HistogramMeasure):
        cm = np.concatenate([[0.0], np.cumsum(mu.masses)])
        cm[-1] = 1.0
        return LinearQuantile(np.maximum.accumulate(cm), mu.edges)
    raise ParameterError(f"chi_inverse is not defined for {type(mu).__name__}")


def hat_function(i, k, t):
    """``Phi_k^(i)(t)``: 1 up to ``(i-1)/k``, linear down to 0 at ``i/k``."""
    if not (1 <= i <= k):
        raise ParameterError(f"need 1 <= i <= k, got i={i}, k={k}")
    t = np.asarray(t, dtype=float)
    out = np.clip(i - k * t, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def stieltjes_hat(g, i, k):
    """``int_[0,1] Phi_k^(i) dg`` for a step quantile, counting ``g(0)`` as an atom at 0."""
    if not isinstance(g, StepQuantile):
        raise ParameterError("stieltjes_hat needs a StepQuantile")
    jumps = np.diff(g.values)
    out = g.values[0] * hat_function(i, k, 0.0)
    out += float(jumps @ hat_function(i, k, g.breakpoints[1:]))
    out += (1.0 - g.values[-1]) * hat_function(i, k, 1.0)
    return out


def project_J(g, k):
    """Cell averages ``(k int_{(i-1)/k}^{i/k} g dt)_i``, computed exactly."""
    k = int(k)
    if k < 1:
        raise ParameterError("k must be positive")
    grid = np.arange(k + 1) / k
    x = k * np.diff(g.primitive(grid))
    return np.maximum.accumulate(np.clip(x, 0.0, 1.0))


def embed_iota(x):
    """Step function equal to ``x_i`` on ``[(i-1)/k, i/k)``."""
    x = _as_float_array(getattr(x, "coords", x), "x")
    return StepQuantile(np.arange(x.size) / x.size, x)


def project_pi_P(mu, k):
    """Replace ``mu`` by ``(1/k) sum delta_{x_i}``, ``x_i`` the mean of its ``i``-th ``1/k`` slice.

    Slices are cut at the ``i/k`` quantiles; an atom straddling a cut is split
    between the neighbouring slices.  Works on the measure directly, without
    going through quantile functions.
    """
    k = int(k)
    if k < 1:
        raise ParameterError("k must be positive")
    levels = np.arange(k + 1) / k
    if isinstance(mu, AtomicMeasure):
        cw = np.concatenate([[0.0], np.cumsum(mu.weights)])
        cw[-1] = 1.0
        # first moment as a function of cumulative mass is piecewise linear
        moment = np.concatenate([[0.0], np.cumsum(mu.weights * mu.atoms)])
        m_at = np.interp(levels, cw, moment)
    elif isinstance(mu, HistogramMeasure):
        e, m = mu.edges, mu.masses
        cm = np.concatenate([[0.0], np.cumsum(m)])
        cm[-1] = 1.0

        def first_moment(level):
            j = np.clip(np.searchsorted(cm, level, side="right") - 1, 0, m.size - 1)
            full = np.concatenate([[0.0], np.cumsum(m * 0.5 * (e[:-1] + e[1:]))])
            frac = np.where(m[j] > 0, (level - cm[j]) / np.where(m[j] > 0, m[j], 1.0), 0.0)
            s = e[j] + frac * (e[j + 1] - e[j])
            return full[j] + (level - cm[j]) * 0.5 * (e[j] + s)

        m_at = first_moment(levels)
    else:
        raise ParameterError(f"project_pi_P is not defined for {type(mu).__name__}")
    x = k * np.diff(m_at)
    return EmpiricalMeasure(np.clip(x, 0.0, 1.0))


def _quantile(m):
    if isinstance(m, (StepQuantile, LinearQuantile)):
        return m
    return chi_inverse(m)


def wasserstein_distance(mu, nu):
    """L2-Wasserstein distance, i.e. ``||g_mu - g_nu||_{L2[0,1]}``, integrated exactly.

    On the common refinement of both quantile partitions the difference is
    linear, so each piece contributes ``len * (d0**2 + d0 d1 + d1**2) / 3``.
    """
    g, h = _quantile(mu), _quantile(nu)
    edges = np.union1d(g.edges, h.edges)
    g0, g1 = g.segment_ends(edges)
    h0, h1 = h.segment_ends(edges)
    d0, d1 = g0 - h0, g1 - h1
    sq = np.diff(edges) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0
    return float(np.sqrt(max(sq.sum(), 0.0)))

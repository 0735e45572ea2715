"""Exact samplers for the Dirichlet-Ferguson process and its projections.

All samplers take an explicit ``numpy.random.Generator``.  Dirichlet vectors
are formed by normalizing independent Gamma variables; because the shapes
``beta * dt`` are usually far below one, the Gammas are generated in log space
via ``G_a = G_{a+1} * U**(1/a)``, which never underflows to an exact zero.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError
from .measures import StepQuantile
from .random_means import sample_random_mean

__all__ = [
    "GridPath",
    "MIN_SHAPE",
    "log_gamma_variates",
    "sample_grid_marginals",
    "sample_mk",
    "sample_entropic",
    "sample_rho_tilde",
]

MIN_SHAPE = 1e-12


@dataclass(frozen=True)
class GridPath:
    """Values ``g(t_1) <= ... <= g(t_m)`` of a path at fixed times.

    ``values`` has shape ``(m,)`` for one path or ``(n, m)`` for ``n`` paths.
    """

    times: np.ndarray
    values: np.ndarray
    beta: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ParameterError("times must be strictly increasing")
        if t.size and (t[0] <= 0 or t[-1] >= 1):
            raise ParameterError("times must lie in (0, 1)")
        if v.shape[-1] != t.size:
            raise ParameterError("values do not match times")
        if np.any(np.diff(v, axis=-1) < 0) or np.any(v < 0) or np.any(v > 1):
            raise ParameterError("values must be nondecreasing in [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


def log_gamma_variates(shape, rng, size):
    """``log G`` for ``G ~ Gamma(shape, 1)``, accurate for tiny shapes."""
    shape = np.asarray(shape, dtype=float)
    if np.any(shape < MIN_SHAPE):
        raise ParameterError(f"Gamma shape below {MIN_SHAPE}: {shape.min()}")
    g = rng.standard_gamma(shape + 1.0, size=size)
    u = rng.random(size)
    return np.log(g) + np.log(u) / shape


def _dirichlet_log_increments(shapes, rng, n):
    """Logs of ``n`` Dirichlet(shapes) vectors, shape ``(n, len(shapes))``."""
    lg = log_gamma_variates(np.asarray(shapes, float), rng, (n, len(shapes)))
    return lg - logsumexp(lg, axis=1, keepdims=True)


def _increment_shapes(times, beta):
    t = np.concatenate([[0.0], np.asarray(times, float), [1.0]])
    shapes = beta * np.diff(t)
    if np.any(shapes < MIN_SHAPE):
        raise ParameterError(
            f"beta * (t_i - t_(i-1)) = {shapes.min():.2e} is below {MIN_SHAPE}")
    return shapes


def sample_grid_marginals(times, beta, rng, size=None):
    """Draw ``(g(t_1), ..., g(t_m))`` for ``g ~ Q^beta``.

    The increments over ``[0, t_1], ..., [t_m, 1]`` form a Dirichlet vector with
    parameters ``beta * (t_i - t_(i-1))``, and ``g(1) = 1``.
    """
    if not beta > 0:
        raise ParameterError("beta must be positive")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or (
            times.size and (times[0] <= 0 or times[-1] >= 1)):
        raise ParameterError("times must be strictly increasing in (0, 1)")
    shapes = _increment_shapes(times, beta)
    n = 1 if size is None else int(size)
    inc = np.exp(_dirichlet_log_increments(shapes, rng, n))
    values = np.minimum(np.cumsum(inc[:, :-1], axis=1), 1.0)
    return GridPath(times, values[0] if size is None else values, float(beta))


def sample_mk(beta, k, rng, size=None):
    """Exact draws from ``m_k^beta``, the law of the cell averages of ``g``.

    Composition: cell boundary values ``y_i = g(i/k)`` from the grid
    marginals, then independent random means ``z_i ~ vartheta_{beta/k}``,
    and ``x_i = y_{i-1} + (y_i - y_{i-1}) z_i``.  Returns shape ``(k,)`` or
    ``(size, k)``.
    """
    k = int(k)
    if k < 1:
        raise ParameterError("k must be at least 1")
    if not 0 < beta / k < 1:
        raise ParameterError(f"beta/k must lie in (0, 1), got {beta / k}")
    n = 1 if size is None else int(size)
    z = sample_random_mean(beta / k, rng, size=(n, k))
    if k == 1:
        x = z
    else:
        inc = np.exp(_dirichlet_log_increments(np.full(k, beta / k), rng, n))
        y0 = np.concatenate([np.zeros((n, 1)), np.cumsum(inc[:, :-1], axis=1)], axis=1)
        # the cumulative sum can overshoot one by an ulp
        x = np.minimum(y0 + inc * z, 1.0)
    return x[0] if size is None else x


def sample_rho_tilde(beta, k, rng, size=None):
    """Exact draws of ``(g((2i-1)/(2k)))_i``, the Dirichlet-type law ``rho_tilde_k``."""
    k = int(k)
    times = (2 * np.arange(1, k + 1) - 1) / (2 * k)
    path = sample_grid_marginals(times, beta, rng, size=1 if size is None else size)
    return path.values[0] if size is None else path.values


def sample_entropic(beta, grid_size, rng):
    """A path of ``Q^beta`` on the dyadic grid ``i / grid_size`` as a step quantile.

    The value on ``[i/n, (i+1)/n)`` is the exact marginal ``g(i/n)``; in
    particular ``g(0) = 0`` on the first cell, and ``g(1) = 1``.
    """
    grid_size = int(grid_size)
    if grid_size < 1 or grid_size & (grid_size - 1):
        raise ParameterError("grid_size must be a power of two")
    if not beta > 0:
        raise ParameterError("beta must be positive")
    shapes = np.full(grid_size, beta / grid_size)
    if shapes[0] < MIN_SHAPE:
        raise ParameterError("grid too fine for this beta")
    inc = np.exp(_dirichlet_log_increments(shapes, rng, 1))[0]
    values = np.concatenate([[0.0], np.minimum(np.cumsum(inc[:-1]), 1.0)])
    return StepQuantile(np.arange(grid_size) / grid_size, values)

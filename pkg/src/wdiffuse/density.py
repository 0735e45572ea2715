"""Densities of the projected laws on the ordered simplex.

``rho_k^beta`` is the density of the vector of cell averages ``J_k(g)`` of a
Dirichlet-Ferguson path; it is a ``(k-1)``-fold integral over the cell
boundary values ``y`` of a product of random-means densities
``vartheta_{beta/k}``.  ``rho_tilde_k`` is the Dirichlet-type density of the
point values ``g((2i-1)/(2k))``.

Integrands are assembled in log space: the gap factors
``(y_i - y_{i-1})**(beta/k - 2)`` are huge exactly where ``vartheta`` vanishes,
and only their product is well scaled.
"""

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.special import gammaln, roots_legendre

from .dirichlet import _dirichlet_log_increments, log_gamma_variates
from .errors import BoundaryError, ParameterError, QuadratureError
from .quad import integrate_adaptive, integrate_batch
from .random_means import (envelope_constants, log_vartheta, log_vartheta_logs,
                           sample_random_mean, vartheta)
from .stats import StreamKey, derive_stream

__all__ = [
    "SimplexPoint",
    "DensityModel",
    "DensityEstimate",
    "HierarchyResult",
    "TabulatedLogDensity",
    "rho",
    "rho_batch",
    "log_rho_grad",
    "rho_upper_shape",
    "upper_bound_constant",
    "rho_tilde",
    "log_rho_tilde",
    "grad_log_rho_tilde",
    "check_hierarchy",
    "cell_masses_k2",
    "log_normalizer",
]

MAX_K = 8
QUADRATURE_MAX_K = 3
BOUNDARY_EPS = 1e-12


@dataclass(frozen=True)
class SimplexPoint:
    """A configuration ``x_1 <= ... <= x_k`` in the closed simplex (or outside it)."""

    coords: tuple
    eps: float = BOUNDARY_EPS

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.coords, float)))
        if not c:
            raise ParameterError("a simplex point needs at least one coordinate")
        object.__setattr__(self, "coords", c)

    @classmethod
    def of(cls, x):
        return x if isinstance(x, cls) else cls(tuple(np.atleast_1d(x)))

    @property
    def k(self):
        return len(self.coords)

    @property
    def array(self):
        return np.array(self.coords)

    def gaps(self):
        """``(x_1, x_2 - x_1, ..., 1 - x_k)``."""
        return np.diff(np.concatenate([[0.0], self.array, [1.0]]))

    @property
    def interior(self):
        return bool(np.all(self.gaps() > 0))

    @property
    def near_boundary(self):
        """True if some ordering gap is below ``eps`` (or already violated)."""
        return bool(np.min(self.gaps()) < self.eps)

    def reflected(self):
        return SimplexPoint(tuple(1.0 - self.array[::-1]), self.eps)


@dataclass(frozen=True)
class DensityEstimate:
    value: float
    error_estimate: float
    status: str = "ok"


@dataclass(frozen=True)
class DensityModel:
    """Parameters and evaluation strategy for ``rho_k^beta``."""

    beta: float
    k: int
    strategy: str = "auto"
    mc_budget: int = 200_000
    quad_tol: float = 1e-9
    mc_seed: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")
        if not 1 <= self.k <= MAX_K:
            raise ParameterError(f"k must lie in 1..{MAX_K}, got {self.k}")
        if not 0 < self.beta / self.k < 1:
            raise ParameterError(f"beta/k must lie in (0, 1), got {self.beta / self.k}")
        strategy = self.strategy
        if strategy == "auto":
            strategy = "quadrature" if self.k <= QUADRATURE_MAX_K else "monte_carlo"
            object.__setattr__(self, "strategy", strategy)
        if strategy not in ("quadrature", "monte_carlo"):
            raise ParameterError(f"unknown strategy {strategy!r}")
        if strategy == "quadrature" and self.k > QUADRATURE_MAX_K:
            raise ParameterError(f"quadrature is limited to k <= {QUADRATURE_MAX_K}")
        if self.mc_budget < 100:
            raise ParameterError("mc_budget must be at least 100")
        if not self.quad_tol > 0:
            raise ParameterError("quad_tol must be positive")

    @property
    def alpha(self):
        """Index ``beta / k`` of the per-cell random-means densities."""
        return self.beta / self.k


def log_normalizer(beta, k):
    """``log(Gamma(beta) / Gamma(beta/k)**k)``."""
    return float(gammaln(beta) - k * gammaln(beta / k))


def _cell_log_terms(log_left, log_right, alpha):
    """Log of ``vartheta_a(z) * gap**(a-2)`` for a cell split into two pieces.

    ``left = x_i - y_{i-1}`` and ``right = y_i - x_i`` are given by their logs,
    so ``z = left / gap`` and ``1 - z = right / gap`` never lose precision.
    """
    log_gap = np.logaddexp(log_left, log_right)
    return log_vartheta_logs(log_left - log_gap, log_right - log_gap, alpha) \
        + (alpha - 2.0) * log_gap


# ---------------------------------------------------------------- k = 2

def _rho2_batch(x1, x2, beta, tol, chunk=4000):
    """Quadrature values of ``rho_2`` at interior points (arrays)."""
    if x1.size > chunk:
        parts = [_rho2_batch(x1[i:i + chunk], x2[i:i + chunk], beta, tol, chunk)
                 for i in range(0, x1.size, chunk)]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    a = beta / 2.0
    logc = log_normalizer(beta, 2)
    n = x1.size
    l_len = np.tile(np.log(x2 - x1), 2)
    l_x1 = np.tile(np.log(x1), 2)
    l_r = np.tile(np.log1p(-x2), 2)
    # integral i < n covers y near x1, integral i + n covers y near x2; each
    # runs over v in (0, 1/2) so that both boundary layers sit at v = 0 where
    # the nodes keep full relative precision
    near_right = np.arange(2 * n) >= n

    def f(v, owner):
        # distance to the near end is L sin^2(pi v / 2), to the far end L cos^2
        ls = 2.0 * np.log(np.sin(0.5 * np.pi * v))
        lc = 2.0 * np.log(np.cos(0.5 * np.pi * v))
        flip = near_right[owner][:, None]
        l_dx1 = np.where(flip, lc, ls)
        l_dx2 = np.where(flip, ls, lc)
        ll = l_len[owner][:, None]
        t1 = _cell_log_terms(l_x1[owner][:, None], ll + l_dx1, a)
        t2 = _cell_log_terms(ll + l_dx2, l_r[owner][:, None], a)
        jac = ll + np.log(0.5 * np.pi * np.sin(np.pi * v))
        return np.exp(logc + t1 + t2 + jac)

    res = integrate_batch(f, np.zeros(2 * n), np.full(2 * n, 0.5), tol=0.0, rtol=tol)
    vals = res.values[:n] + res.values[n:]
    errs = res.abs_errors[:n] + res.abs_errors[n:]
    return vals, np.maximum(errs, 1e-15 * np.abs(vals))


# ---------------------------------------------------------------- k = 3

def _rho3_point(x, beta, tol):
    """``rho_3`` by nested quadrature in Duffy coordinates around ``y1 = y2 = x2``."""
    x1, x2, x3 = x
    a = beta / 3.0
    logc = log_normalizer(beta, 3)
    S = x2 - x1
    T = x3 - x2
    lS, lT = math.log(S), math.log(T)

    def log_integrand(ls, lt, ls_c, lt_c):
        # s = x2 - y1, t = y2 - x2 (logs), s_c = y1 - x1, t_c = x3 - y2
        t1 = _cell_log_terms(math.log(x1) + 0.0 * ls, ls_c, a)
        t2 = _cell_log_terms(ls, lt, a)
        t3 = _cell_log_terms(lt_c, math.log1p(-x3) + 0.0 * lt, a)
        return logc + t1 + t2 + t3

    total = 0.0
    err = 0.0
    # r = u**(1/a) removes the r**(a-1) corner singularity; the 1/a factor
    # and the Duffy Jacobian r combine with dr below.
    # The u-range is split at 1/2 and the upper half written as 1 - u = p**2,
    # so the (1 - r)**a layer at r -> 1 is resolved in full precision and
    # becomes p**(2a + 1).  The outer w -> 0 end behaves like w**a and gets
    # the same w = q**2 treatment.
    p_max = math.sqrt(0.5)
    for swap in (False, True):
        def inner(q):
            q = np.asarray(q, float)
            n = q.size
            upper = np.arange(2 * n) >= n
            lw_all = np.tile(2.0 * np.log(q), 2)
            log_jw = np.tile(math.log(2.0) + np.log(q), 2)

            def g(v, owner):
                flip = upper[owner][:, None]
                lu = np.where(flip, np.log1p(-v * v), np.log(v))
                log_ju = np.where(flip, math.log(2.0) + np.log(v), 0.0)
                lr = lu / a
                lw = lw_all[owner][:, None]
                l_sig = lr if not swap else lr + lw
                l_tau = lr + lw if not swap else lr
                ls = lS + l_sig
                lt = lT + l_tau
                with np.errstate(divide="ignore"):
                    ls_c = lS + np.log(-np.expm1(l_sig))
                    lt_c = lT + np.log(-np.expm1(l_tau))
                lf = log_integrand(ls, lt, ls_c, lt_c)
                # dy1 dy2 = S T r dr dw and dr = (1/a) u**(1/a - 1) du
                return np.exp(lf + lS + lT + lr + (lr - lu) - math.log(a)
                              + log_ju + log_jw[owner][:, None])

            hi = np.concatenate([np.full(n, 0.5), np.full(n, p_max)])
            res = integrate_batch(g, np.zeros(2 * n), hi, tol=0.0, rtol=tol * 0.1)
            return res.values[:n] + res.values[n:]

        out = integrate_adaptive(inner, 0.0, 1.0, tol=0.0, rtol=tol)
        total += out.value
        err += out.abs_error_estimate
    return total, max(err, 1e-15 * abs(total))


# ---------------------------------------------------------------- k >= 4 (Monte Carlo)

def _rho_mc(x, beta, n, rng, batch=50_000):
    """Importance-sampling estimate of ``rho_k`` with per-cell Beta proposals."""
    k = x.size
    a = beta / k
    h = 0.5 * a
    logc = log_normalizer(beta, k)
    lengths = np.diff(x)                  # (x_{i+1} - x_i), i = 1..k-1
    l_len = np.log(lengths)
    log_beta_norm = 2 * math.lgamma(h) - math.lgamma(2 * h)
    l_first = math.log(x[0])
    l_last = math.log1p(-x[-1])
    sums = 0.0
    sq = 0.0
    done = 0
    while done < n:
        m = min(batch, n - done)
        lg1 = log_gamma_variates(h, rng, (m, k - 1))
        lg2 = log_gamma_variates(h, rng, (m, k - 1))
        lsum = np.logaddexp(lg1, lg2)
        lb = lg1 - lsum                   # log B, B ~ Beta(h, h)
        lbc = lg2 - lsum                  # log(1 - B)
        l_right = l_len + lb              # y_i - x_i
        l_left = l_len + lbc              # x_{i+1} - y_i
        # cell i uses (x_i - y_{i-1}, y_i - x_i)
        lefts = np.concatenate([np.full((m, 1), l_first), l_left], axis=1)
        rights = np.concatenate([l_right, np.full((m, 1), l_last)], axis=1)
        lf = logc + _cell_log_terms(lefts, rights, a).sum(axis=1)
        lq = ((h - 1.0) * (lb + lbc) - log_beta_norm - l_len).sum(axis=1)
        w = np.exp(lf - lq)
        sums += w.sum()
        sq += np.square(w).sum()
        done += m
    mean = sums / n
    var = max(sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


# ---------------------------------------------------------------- public API

def rho_batch(model, points, rng=None):
    """Evaluate ``rho_k^beta`` at an ``(n, k)`` array of points.

    Returns ``(values, error_estimates)``.  Points outside the open simplex
    get density zero.  Monte Carlo estimates use one stream per point derived
    from ``(model.mc_seed, point index)`` unless ``rng`` is given.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != model.k:
        raise ParameterError(f"points have dimension {pts.shape[1]}, model has k={model.k}")
    n = pts.shape[0]
    vals = np.zeros(n)
    errs = np.zeros(n)
    gaps = np.diff(np.concatenate([np.zeros((n, 1)), pts, np.ones((n, 1))], axis=1), axis=1)
    inside = np.all(gaps > 0, axis=1)
    if not inside.any():
        return vals, errs
    idx = np.flatnonzero(inside)
    beta, k = model.beta, model.k
    if k == 1:
        vals[idx] = vartheta(pts[idx, 0], beta)
        errs[idx] = 1e-13 * vals[idx]
    elif model.strategy == "quadrature" and k == 2:
        v, e = _rho2_batch(pts[idx, 0], pts[idx, 1], beta, model.quad_tol)
        vals[idx], errs[idx] = v, e
    elif model.strategy == "quadrature":
        for i in idx:
            vals[i], errs[i] = _rho3_point(pts[i], beta, model.quad_tol)
    else:
        for i in idx:
            stream = rng if rng is not None else derive_stream(StreamKey(model.mc_seed, int(i)))
            vals[i], errs[i] = _rho_mc(pts[i], beta, model.mc_budget, stream)
    return vals, errs


def rho(model, x, rng=None):
    """``rho_k^beta(x)`` with an error estimate.

    Quadrature is used for ``k <= 3`` and importance-sampled Monte Carlo for
    larger ``k`` (reported stderr as error estimate; ``status="warning"`` if it
    exceeds 10% of the value).
    """
    x = SimplexPoint.of(x)
    if x.k != model.k:
        raise ParameterError(f"point has k={x.k}, model has k={model.k}")
    try:
        v, e = rho_batch(model, x.array[None, :], rng=rng)
    except QuadratureError as exc:
        best = exc.best
        if best is not None and hasattr(best, "values"):
            exc.best = DensityEstimate(float(best.values[0]), float(best.abs_errors[0]), "failed")
        raise
    value, err = float(v[0]), float(e[0])
    status = "ok"
    if model.strategy == "monte_carlo" and model.k > 1 and value > 0 and err > 0.1 * value:
        status = "warning"
        warnings.warn(f"Monte Carlo relative stderr {err / value:.2f} exceeds 10%",
                      RuntimeWarning, stacklevel=2)
    return DensityEstimate(value, err, status)


def log_rho_grad(model, x, h_rel=1e-3, rng_seed=None):
    """Central finite-difference gradient of ``log rho_k^beta`` at interior ``x``.

    Coordinate ``i`` uses the step ``h_rel * min(x_i - x_{i-1}, x_{i+1} - x_i)``
    with ``x_0 = 0`` and ``x_{k+1} = 1``.  Monte Carlo evaluations share one
    stream (common random numbers) so the difference is not swamped by noise.
    """
    x = SimplexPoint.of(x)
    if not 0 < h_rel < 0.1:
        raise ParameterError("h_rel must lie in (0, 0.1)")
    if x.k != model.k:
        raise ParameterError(f"point has k={x.k}, model has k={model.k}")
    gaps = x.gaps()
    if np.any(gaps <= 0):
        raise BoundaryError("log_rho_grad needs an interior point")
    h = h_rel * np.minimum(gaps[:-1], gaps[1:])
    if np.any(h < 1e-12):
        raise BoundaryError(f"finite-difference step {h.min():.1e} collapsed below 1e-12")
    k = x.k
    pts = np.repeat(x.array[None, :], 2 * k, axis=0)
    for i in range(k):
        pts[2 * i, i] += h[i]
        pts[2 * i + 1, i] -= h[i]
    if model.strategy == "monte_carlo" and k > 1:
        seed = model.mc_seed if rng_seed is None else rng_seed
        vals = np.array([_rho_mc(p, model.beta, model.mc_budget,
                                 derive_stream(StreamKey(seed, 0)))[0] for p in pts])
    else:
        vals, _ = rho_batch(model, pts)
    if np.any(vals <= 0):
        raise BoundaryError("density vanished inside the finite-difference stencil")
    lv = np.log(vals)
    return (lv[0::2] - lv[1::2]) / (2.0 * h)


def rho_upper_shape(beta, k, x):
    """``[x_1 (1-x_k)]**(beta/(2k) - 1) * prod (x_i - x_{i-1})**(beta/k - 1)``."""
    x = SimplexPoint.of(x)
    if x.k != k:
        raise ParameterError("dimension mismatch")
    g = x.gaps()
    if np.any(g <= 0):
        raise ParameterError("rho_upper_shape needs an interior point")
    a = beta / k
    return float(np.exp((0.5 * a - 1.0) * (math.log(g[0]) + math.log(g[-1]))
                        + (a - 1.0) * np.log(g[1:-1]).sum()))


def upper_bound_constant(beta, k):
    """Explicit constant for ``rho_k <= const * rho_upper_shape``.

    ``C**k Gamma(b)/Gamma(b/k)**k [Gamma(b/(2k))**2 / Gamma(b/k)]**(k-1) 2**(b-2k)``
    where ``C = sup vartheta_{b/k}`` is bounded by the envelope constant times
    ``sup (e x (1-x))**(b/k) = (e/4)**(b/k)``.
    """
    a = beta / k
    _, c_env = envelope_constants(a)
    c_sup = c_env * (math.e / 4.0) ** a
    logv = (k * math.log(c_sup) + log_normalizer(beta, k)
            + (k - 1) * (2 * math.lgamma(a / 2) - math.lgamma(a))
            + (beta - 2 * k) * math.log(2.0))
    return math.exp(logv)


def _tilde_exponents(beta, k):
    e = np.full(k + 1, beta / k - 1.0)
    e[0] = e[-1] = beta / (2 * k) - 1.0
    return e


def _tilde_log_norm(beta, k):
    return float(gammaln(beta) - 2 * gammaln(beta / (2 * k)) - (k - 1) * gammaln(beta / k))


def log_rho_tilde(beta, k, x):
    """Log of the Dirichlet-type density of ``(g((2i-1)/(2k)))_i``; ``-inf`` off the simplex."""
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    if pts.shape[-1] != k:
        raise ParameterError("dimension mismatch")
    n = pts.shape[0]
    g = np.diff(np.concatenate([np.zeros((n, 1)), pts, np.ones((n, 1))], axis=1), axis=1)
    out = np.full(n, -np.inf)
    ok = np.all(g > 0, axis=1)
    out[ok] = _tilde_log_norm(beta, k) + np.log(g[ok]) @ _tilde_exponents(beta, k)
    return out if x.ndim > 1 else float(out[0])


def rho_tilde(beta, k, x):
    """Density ``rho_tilde_k`` (zero off the open simplex)."""
    if not 0 < beta / (2 * k):
        raise ParameterError("beta must be positive")
    lv = log_rho_tilde(beta, k, x)
    return np.exp(lv) if np.ndim(lv) else math.exp(lv)


def grad_log_rho_tilde(beta, k, x):
    """Analytic gradient of ``log rho_tilde_k``; rows of ``x`` are configurations."""
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    n = pts.shape[0]
    g = np.diff(np.concatenate([np.zeros((n, 1)), pts, np.ones((n, 1))], axis=1), axis=1)
    e = _tilde_exponents(beta, k)
    t = e / g
    out = t[:, :-1] - t[:, 1:]
    return out if x.ndim > 1 else out[0]


# ---------------------------------------------------------------- cell masses

def _gauss(n):
    t, w = roots_legendre(n)
    return 0.5 * (t + 1.0), 0.5 * w


def cell_masses_k2(beta, n_cells=20, order=12, tol=1e-10):
    """Masses of ``rho_2`` on the cells ``[i/n, (i+1)/n) x [j/n, (j+1)/n)``, ``i <= j``.

    Returns an ``(n, n)`` array, zero below the diagonal.  Off-diagonal cells
    use a tensor Gauss rule; cells touching ``x_1 = 0`` or ``x_2 = 1`` grade the
    nodes with ``x = h u**q`` (``q = 2/beta``) to absorb the ``x**(beta/2 - 1)``
    boundary singularity, and diagonal cells integrate over the triangle with
    ``x_2 = x_1 + (hi - x_1) v``.
    """
    t, w = _gauss(order)
    q = 2.0 / beta
    h = 1.0 / n_cells
    pts = []
    wts = []
    owners = []

    def axis(lo, graded_low, graded_high):
        if graded_low:
            return lo + h * t ** q, h * q * t ** (q - 1.0) * w
        if graded_high:
            return lo + h - h * t ** q, h * q * t ** (q - 1.0) * w
        return lo + h * t, h * w

    for i in range(n_cells):
        for j in range(i, n_cells):
            cell = i * n_cells + j
            ax, aw = axis(i * h, i == 0, False)
            if i == j:
                hi = (i + 1) * h
                # x2 in (x1, hi); grade toward x2 = 1 on the last cell
                X1 = np.repeat(ax, order)
                W1 = np.repeat(aw, order)
                V = np.tile(t, order)
                VW = np.tile(w, order)
                span = hi - X1
                if j == n_cells - 1:
                    X2 = hi - span * V ** q
                    W = W1 * span * q * V ** (q - 1.0) * VW
                else:
                    X2 = X1 + span * V
                    W = W1 * span * VW
                pts.append(np.column_stack([X1, X2]))
                wts.append(W)
            else:
                bx, bw = axis(j * h, False, j == n_cells - 1)
                X1, X2 = np.meshgrid(ax, bx, indexing="ij")
                pts.append(np.column_stack([X1.ravel(), X2.ravel()]))
                wts.append(np.outer(aw, bw).ravel())
            owners.append(np.full(wts[-1].size, cell))
    P = np.concatenate(pts)
    W = np.concatenate(wts)
    O = np.concatenate(owners)
    good = (P[:, 0] > 0) & (P[:, 1] > P[:, 0]) & (P[:, 1] < 1)
    vals = np.zeros(len(P))
    vals[good] = _rho2_batch(P[good, 0], P[good, 1], beta, tol)[0]
    masses = np.bincount(O, weights=vals * W, minlength=n_cells * n_cells)
    return masses.reshape(n_cells, n_cells)


# ---------------------------------------------------------------- hierarchy

@dataclass(frozen=True)
class HierarchyResult:
    estimate: float
    stderr: float
    reference: float
    relative_error: float
    status: str = "ok"


def _hierarchy_mc(beta, k, x, n, rng, batch=100_000):
    """Monte Carlo value of ``2**k int rho_{2k}(x_1 - xi_1, x_1 + xi_1, ...) dxi``.

    This is the density at ``x`` of the pair means ``(X_{2i-1} + X_{2i}) / 2``
    of ``X ~ m_{2k}``.  Given the cell boundaries ``y`` and one of the two
    random means of each pair, the pair mean has an explicit conditional
    density; integrating out the mean of the wider cell keeps the estimator
    bounded.
    """
    a = beta / (2 * k)
    sums = 0.0
    sq = 0.0
    done = 0
    while done < n:
        m = min(batch, n - done)
        dy = np.exp(_dirichlet_log_increments(np.full(2 * k, beta / (2 * k)), rng, m))
        y = np.concatenate([np.zeros((m, 1)), np.cumsum(dy, axis=1)], axis=1)
        z = sample_random_mean(a, rng, size=(m, 2 * k))
        log_w = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        for i in range(k):
            d1, d2 = dy[:, 2 * i], dy[:, 2 * i + 1]
            base = y[:, 2 * i]
            z1, z2 = z[:, 2 * i], z[:, 2 * i + 1]
            wide_first = d1 >= d2
            # 2 x_i = base + d1 z1 + base + d1 + d2 z2
            rest = np.where(wide_first, 2 * x[i] - 2 * base - d1 - d2 * z2,
                            2 * x[i] - 2 * base - d1 - d1 * z1)
            d = np.where(wide_first, d1, d2)
            zs = rest / d
            ok = (zs > 0) & (zs < 1)
            alive &= ok
            zs = np.where(ok, zs, 0.5)
            log_w += np.log(2.0 / d) + log_vartheta(zs, a)
        w = np.where(alive, np.exp(log_w), 0.0)
        sums += w.sum()
        sq += np.square(w).sum()
        done += m
    mean = sums / n
    return mean, math.sqrt(max(sq / n - mean * mean, 0.0) / n)


def _hierarchy_quadrature_k1(beta, x, tol=1e-8):
    """``2 int_0^m rho_2(x - xi, x + xi) dxi`` by nested quadrature (``k = 1``)."""
    m = min(x, 1.0 - x)
    a = beta / 2.0
    # graded toward xi = m, where rho_2 has a power singularity at the boundary
    q = 1.0 / a

    def f(u):
        # m - xi formed directly: x - xi cancels catastrophically near xi = m
        rest = m * (1.0 - u) ** q
        xi = m - rest
        jac = m * q * (1.0 - u) ** (q - 1.0)
        x1 = (x - m) + rest
        x2 = (x + m) - rest
        ok = (x1 > 0) & (x2 < 1) & (xi > 0)
        out = np.zeros_like(u)
        if ok.any():
            out[ok] = _rho2_batch(x1[ok], x2[ok], beta, tol * 0.01)[0] * jac[ok]
        return 2.0 * out

    return integrate_adaptive(f, 0.0, 1.0, tol=tol).value


def check_hierarchy(beta, k, x, mc_budget, rng, tol=0.05, method="monte_carlo"):
    """Relative error of the pair-merging identity ``rho_k = 2**k int rho_{2k}``.

    The reference ``rho_k(x)`` is evaluated by :func:`rho`; the right-hand side
    by Monte Carlo (default) or, for ``k = 1``, by nested quadrature.  A
    warning is issued when three standard errors exceed ``tol`` relative to
    the reference.
    """
    x = SimplexPoint.of(x)
    if not 0 < beta / (2 * k) < 1:
        raise ParameterError("need beta/(2k) in (0, 1)")
    if x.k != k or not x.interior:
        raise ParameterError("x must be an interior point of the k-simplex")
    ref = rho(DensityModel(beta, k), x).value
    if method == "monte_carlo":
        est, se = _hierarchy_mc(beta, k, x.array, int(mc_budget), rng)
    elif method == "quadrature" and k == 1:
        est, se = _hierarchy_quadrature_k1(beta, x.coords[0]), 0.0
    else:
        raise ParameterError(f"unsupported hierarchy method {method!r} for k={k}")
    rel = abs(est - ref) / ref
    status = "ok"
    if 3 * se > tol * ref:
        status = "warning"
        warnings.warn(f"hierarchy estimate stderr {se:.3g} too large for tolerance {tol}",
                      RuntimeWarning, stacklevel=2)
    return HierarchyResult(est, se, ref, rel, status)


# ---------------------------------------------------------------- tables

class TabulatedLogDensity:
    """Spline table of ``log rho_2`` for fast repeated evaluation in the SDE.

    The known boundary behaviour is factored out analytically,

        log rho_2 = (a-1) log x1 + (a-1) log(1-x2) + (2a+1) log(x2-x1)
                    + log(x1 + 1 - x2) - (a+1) [log x2 + log(1-x1)] + R,

    with ``a = beta/2``.  Both the factor and ``R`` are invariant under the
    reflection ``(x1, x2) -> (1-x2, 1-x1)``, so ``R`` is tabulated only on the
    half ``x1 + x2 <= 1``, in the coordinates ``ratio = x1/x2`` and
    ``s = x1 + x2``.  The ratio coordinate resolves the corner at the origin,
    where ``rho_2`` depends on ``x1/x2``.
    """

    def __init__(self, beta, n_ratio=128, n_sum=128, tol=1e-11):
        self.beta = float(beta)
        self.k = 2
        DensityModel(self.beta, 2)
        self._a = self.beta / 2.0
        self.nodes_ratio = _chebyshev_open(n_ratio)
        self.nodes_sum = _chebyshev_open(n_sum)
        R, S = np.meshgrid(self.nodes_ratio, self.nodes_sum, indexing="ij")
        self.residual = self._exact_residual(R.ravel(), S.ravel(), tol).reshape(R.shape)
        self._spline = RectBivariateSpline(self.nodes_ratio, self.nodes_sum,
                                           self.residual, kx=3, ky=3)

    @staticmethod
    def _from_chart(ratio, total):
        x2 = total / (1.0 + ratio)
        return ratio * x2, x2

    def _exact_residual(self, ratio, total, tol):
        x1, x2 = self._from_chart(ratio, total)
        return np.log(_rho2_batch(x1, x2, self.beta, tol)[0]) - self._singular(x1, x2)

    def _singular(self, x1, x2):
        a = self._a
        return ((a - 1.0) * (np.log(x1) + np.log1p(-x2))
                + (2 * a + 1.0) * np.log(x2 - x1)
                + np.log(x1 + 1.0 - x2)
                - (a + 1.0) * (np.log(x2) + np.log1p(-x1)))

    def _singular_grad(self, x1, x2):
        a = self._a
        gap = x2 - x1
        outer = x1 + 1.0 - x2
        g1 = (a - 1.0) / x1 - (2 * a + 1.0) / gap + 1.0 / outer + (a + 1.0) / (1.0 - x1)
        g2 = -(a - 1.0) / (1.0 - x2) + (2 * a + 1.0) / gap - 1.0 / outer - (a + 1.0) / x2
        return g1, g2

    def _lower_half(self, x1, x2):
        # reflected coordinates for points above the anti-diagonal
        flip = x1 + x2 > 1.0
        l1 = np.where(flip, 1.0 - x2, x1)
        l2 = np.where(flip, 1.0 - x1, x2)
        ratio = np.clip(l1 / l2, self.nodes_ratio[0], self.nodes_ratio[-1])
        total = np.clip(l1 + l2, self.nodes_sum[0], self.nodes_sum[-1])
        return flip, l1, l2, ratio, total

    @staticmethod
    def _inside(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x1, x2 = pts[:, 0], pts[:, 1]
        return pts, (x1 > 0) & (x2 > x1) & (x2 < 1)

    def __call__(self, pts):
        """``log rho_2`` at rows of ``pts``; ``-inf`` outside the open simplex."""
        pts, ok = self._inside(pts)
        out = np.full(len(pts), -np.inf)
        if ok.any():
            x1, x2 = pts[ok, 0], pts[ok, 1]
            _, _, _, ratio, total = self._lower_half(x1, x2)
            out[ok] = self._spline.ev(ratio, total) + self._singular(x1, x2)
        return out

    def grad(self, pts):
        """Gradient of the tabulated log-density at interior rows of ``pts``."""
        pts, ok = self._inside(pts)
        if not ok.all():
            raise BoundaryError("gradient requested outside the open simplex")
        x1, x2 = pts[:, 0], pts[:, 1]
        flip, l1, l2, ratio, total = self._lower_half(x1, x2)
        d_ratio = self._spline.ev(ratio, total, dx=1)
        d_sum = self._spline.ev(ratio, total, dx=0, dy=1)
        # chain rule in the lower half, then undo the reflection
        h1 = d_ratio / l2 + d_sum
        h2 = -d_ratio * l1 / (l2 * l2) + d_sum
        r1 = np.where(flip, -h2, h1)
        r2 = np.where(flip, -h1, h2)
        g1, g2 = self._singular_grad(x1, x2)
        return np.column_stack([r1 + g1, r2 + g2])

    @cached_property
    def max_fit_error(self):
        """Largest spline-vs-quadrature discrepancy of ``log rho_2`` at the
        midpoints of the tabulation grid."""
        rm = 0.5 * (self.nodes_ratio[1:] + self.nodes_ratio[:-1])
        sm = 0.5 * (self.nodes_sum[1:] + self.nodes_sum[:-1])
        R, S = np.meshgrid(rm, sm, indexing="ij")
        exact = self._exact_residual(R.ravel(), S.ravel(), 1e-11)
        return float(np.max(np.abs(exact - self._spline.ev(R.ravel(), S.ravel()))))


def _chebyshev_open(n):
    """Chebyshev points of the first kind mapped to ``(0, 1)``."""
    return 0.5 * (1.0 - np.cos(np.pi * (np.arange(n) + 0.5) / n))

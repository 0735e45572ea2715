"""Law of the random mean of a Dirichlet-Ferguson path.

For ``0 < beta < 1`` the mean ``int_0^1 t dg(t)`` of a path ``g ~ Q^beta``
has a smooth symmetric density ``vartheta_beta`` on ``[0, 1]`` with CDF
``Theta_beta``.  Both are Riemann-Liouville type integrals with a
``(x - y)**(beta - 1)`` kernel; the bulk evaluators below use the product
rule from :func:`wdiffuse.quad.power_weight_rule`, the ``method="adaptive"``
paths use :func:`wdiffuse.quad.integrate_left_singular`.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import betaln

from .errors import ParameterError, SamplerError
from .quad import integrate_adaptive, integrate_left_singular, power_weight_rule

__all__ = [
    "RandomMeansLaw",
    "OscillatoryCDF",
    "eta_prime",
    "vartheta",
    "log_vartheta",
    "log_vartheta_logs",
    "vartheta_envelope",
    "envelope_constants",
    "theta_cdf",
    "theta_cdf_oscillatory",
    "sample_random_mean",
    "rejection_acceptance_rate",
]

# Below this distance to {0, 1} the density is replaced by its boundary asymptote.
ASYMPTOTIC_CUTOFF = 1e-6


def _check_beta(beta):
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    return beta


def _eta_prime(y, beta):
    ly = np.log(y)
    l1 = np.log1p(-y)
    amp = np.exp(beta - beta * y * ly - beta * (1.0 - y) * l1)
    arg = np.pi * beta * y
    return amp * (np.cos(arg) - np.sin(arg) / np.pi * (ly - l1))


def _eta(y, beta):
    amp = np.exp(beta - beta * y * np.log(y) - beta * (1.0 - y) * np.log1p(-y))
    return amp * np.sin(np.pi * beta * y) / (beta * np.pi)


def eta_prime(y, beta):
    """Derivative of the kernel ``eta`` whose fractional integral is ``vartheta``.

    ``e^b y^(-b y) (1-y)^(-b (1-y)) [cos(pi b y) - sin(pi b y) log(y/(1-y)) / pi]``
    for ``0 < y < 1``; the limit ``e^beta`` at ``y -> 0`` is left to callers.
    """
    beta = _check_beta(beta)
    y = np.asarray(y, dtype=float)
    if np.any(~((y > 0) & (y < 1))):
        raise ParameterError("eta_prime is defined for 0 < y < 1 only")
    out = _eta_prime(y, beta)
    return float(out) if out.ndim == 0 else out


def _vartheta_rule(m, beta, chunk=20_000):
    """Product-rule density at ``0 < m <= 1/2`` (array)."""
    _, comp, w = power_weight_rule(beta)
    m = np.asarray(m, dtype=float)
    vals = np.empty(m.shape)
    for i in range(0, m.size, chunk):
        mi = m[i:i + chunk]
        vals[i:i + chunk] = _eta_prime(mi[:, None] * comp[None, :], beta) @ w
    return beta * m ** beta * vals


@lru_cache(maxsize=32)
def _cutoff_residual(beta):
    """``log(vartheta / (e m (1-m))**beta)`` at ``m = ASYMPTOTIC_CUTOFF``.

    Below the cutoff the asymptote is multiplied by ``exp(r0 m / cutoff)``,
    which makes the density continuous there; adaptive quadrature cannot
    resolve even a tiny jump to a relative tolerance.
    """
    m = np.array([ASYMPTOTIC_CUTOFF])
    return float(np.log(_vartheta_rule(m, beta)[0])
                 - beta * (1.0 + math.log(ASYMPTOTIC_CUTOFF) + math.log1p(-ASYMPTOTIC_CUTOFF)))


SPLINE_NODES = 1600


@lru_cache(maxsize=32)
def _log_vartheta_spline(beta):
    """Cubic spline of ``log(vartheta / (e m (1-m))**beta)`` in ``log m``.

    Built from the product rule on ``[ASYMPTOTIC_CUTOFF, 1/2]``; the residual
    is smooth in ``log m`` and has zero slope at ``m = 1/2`` by symmetry.
    Interpolation error is about 1e-10 in the log.
    """
    u = np.linspace(math.log(ASYMPTOTIC_CUTOFF), math.log(0.5), SPLINE_NODES)
    m = np.exp(u)
    r = np.log(_vartheta_rule(m, beta)) - beta * (1.0 + u + np.log1p(-m))
    return CubicSpline(u, r, bc_type=("not-a-knot", (1, 0.0)))


def _log_vartheta_fast(log_m, log_mc, beta):
    """Spline evaluation of ``log vartheta`` for ``log m >= log ASYMPTOTIC_CUTOFF``."""
    return beta * (1.0 + log_m + log_mc) + _log_vartheta_spline(beta)(log_m)


def _vartheta_adaptive(m, beta, tol):
    return beta * integrate_left_singular(
        lambda y: _eta_prime(y, beta), m, beta, tol=tol).value


def vartheta(x, beta, method="rule", tol=1e-13):
    """Density of the random mean, ``vartheta_beta(x)`` for ``x`` in ``[0, 1]``.

    Values for ``x > 1/2`` are taken at ``1 - x`` (the density is symmetric)
    so that the log-odds factor in the kernel is never evaluated near
    ``y = 1``.  Within :data:`ASYMPTOTIC_CUTOFF` of the endpoints the
    boundary asymptote ``(e x (1-x))**beta`` is used, with a correction factor
    that joins it continuously to the quadrature value.

    ``method="adaptive"`` evaluates each point with the substitution-based
    adaptive quadrature instead of the cached product rule.
    """
    beta = _check_beta(beta)
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0) & (x <= 1))):
        raise ParameterError("vartheta is supported on [0, 1]")
    flat = x.ravel()
    m = np.minimum(flat, 1.0 - flat)
    out = np.zeros_like(m)
    tiny = (m > 0) & (m < ASYMPTOTIC_CUTOFF)
    out[tiny] = (math.e * m[tiny] * (1.0 - m[tiny])) ** beta \
        * np.exp(_cutoff_residual(beta) * m[tiny] / ASYMPTOTIC_CUTOFF)
    bulk = m >= ASYMPTOTIC_CUTOFF
    if method == "rule":
        out[bulk] = _vartheta_rule(m[bulk], beta)
    elif method == "adaptive":
        out[bulk] = [_vartheta_adaptive(v, beta, tol) for v in m[bulk]]
    else:
        raise ParameterError(f"unknown method {method!r}")
    out = out.reshape(x.shape)
    return float(out) if out.ndim == 0 else out


def log_vartheta(z, beta, zc=None):
    """``log vartheta_beta(z)``, vectorized; ``zc`` may supply ``1 - z`` exactly.

    Uses a cached spline of the product-rule values (about 1e-10 accurate in
    the log), which is what the multivariate densities need in their
    inner loops.

    Passing the complement matters inside the multivariate density, where
    arguments close to one arise as ratios of small gaps.
    """
    z = np.asarray(z, dtype=float)
    zc = 1.0 - z if zc is None else np.asarray(zc, dtype=float)
    m = np.minimum(z, zc).ravel()
    big = np.maximum(z, zc).ravel()
    out = np.full(m.shape, -np.inf)
    tiny = (m > 0) & (m < ASYMPTOTIC_CUTOFF)
    out[tiny] = beta * (1.0 + np.log(m[tiny]) + np.log(big[tiny])) \
        + _cutoff_residual(beta) * m[tiny] / ASYMPTOTIC_CUTOFF
    bulk = m >= ASYMPTOTIC_CUTOFF
    if bulk.any():
        out[bulk] = _log_vartheta_fast(np.log(m[bulk]), np.log(big[bulk]), beta)
    return out.reshape(np.broadcast(z, zc).shape)


def log_vartheta_logs(log_z, log_zc, beta):
    """``log vartheta_beta(z)`` from ``log z`` and ``log(1 - z)``.

    Arguments whose ``z`` or ``1 - z`` would underflow are handled through the
    boundary asymptote without ever forming ``z``.
    """
    log_z = np.asarray(log_z, dtype=float)
    log_zc = np.asarray(log_zc, dtype=float)
    log_z, log_zc = np.broadcast_arrays(log_z, log_zc)
    lm = np.minimum(log_z, log_zc).ravel()
    lM = np.maximum(log_z, log_zc).ravel()
    out = np.empty(lm.shape)
    cut = math.log(ASYMPTOTIC_CUTOFF)
    tiny = lm < cut
    out[tiny] = beta * (1.0 + lm[tiny] + lM[tiny]) \
        + _cutoff_residual(beta) * np.exp(lm[tiny]) / ASYMPTOTIC_CUTOFF
    bulk = ~tiny
    if bulk.any():
        out[bulk] = _log_vartheta_fast(lm[bulk], lM[bulk], beta)
    return out.reshape(log_z.shape)


def envelope_constants(beta):
    """``(c, C)`` with ``c tilde <= vartheta <= C tilde``, ``tilde = (e x (1-x))**beta``."""
    beta = _check_beta(beta)
    return math.cos(math.pi * beta / 2), 4.0 ** beta * (1.0 + beta / math.e)


def vartheta_envelope(x, beta):
    """Lower and upper envelopes ``(c * tilde(x), C * tilde(x))`` of ``vartheta``."""
    c, C = envelope_constants(beta)
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0) & (x <= 1))):
        raise ParameterError("envelope is defined on [0, 1]")
    tilde = (math.e * x * (1.0 - x)) ** beta
    if tilde.ndim == 0:
        return c * float(tilde), C * float(tilde)
    return c * tilde, C * tilde


def _theta_rule(m, beta):
    _, comp, w = power_weight_rule(beta)
    vals = _eta(m[:, None] * comp[None, :], beta) @ w
    return beta * m ** beta * vals


def theta_cdf(x, beta, method="rule", tol=1e-13):
    """CDF ``Theta_beta(x)`` from its fractional-integral representation.

    Evaluated directly for ``x <= 1/2``; for ``x > 1/2`` as
    ``1 - Theta(1 - x)``, which avoids the doubly singular kernel at ``x = 1``.
    """
    beta = _check_beta(beta)
    x = np.asarray(x, dtype=float)
    if np.any(~((x >= 0) & (x <= 1))):
        raise ParameterError("theta_cdf is supported on [0, 1]")
    flat = x.ravel()
    upper = flat > 0.5
    m = np.where(upper, 1.0 - flat, flat)
    out = np.zeros_like(m)
    pos = m > 0
    if method == "rule":
        out[pos] = _theta_rule(m[pos], beta)
    elif method == "adaptive":
        out[pos] = [beta * integrate_left_singular(lambda y: _eta(y, beta), v, beta,
                                                   tol=tol).value for v in m[pos]]
    else:
        raise ParameterError(f"unknown method {method!r}")
    out = np.where(upper, 1.0 - out, out).reshape(x.shape)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OscillatoryCDF:
    value: float
    truncation_error: float
    t_max: float
    converged: bool
    log_t_max: float = float("nan")


def _log_one_plus_sq(s, u):
    # log(1 + t^2 u^2) with t = exp(s), overflow-free in s
    if s > 0:
        return 2.0 * s + np.log(u * u + math.exp(-2.0 * s))
    return np.log1p(math.exp(2.0 * s) * u * u)


def _osc_integrand(s, x, beta):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    for idx, sv in np.ndenumerate(s):
        t_inv = math.exp(-sv)
        ends = np.array([x, x - 1.0])
        lg = _log_one_plus_sq(sv, ends)
        at = np.arctan2(ends, t_inv)
        F = ends * lg - 2.0 * ends + 2.0 * at * t_inv
        G = ends * at - 0.5 * lg * t_inv
        A = F[0] - F[1]
        B = G[0] - G[1]
        out[idx] = math.exp(-0.5 * beta * A) * math.sin(beta * B)
    return out


def _osc_damping(s, x, beta):
    ends = np.array([x, x - 1.0])
    lg = _log_one_plus_sq(s, ends)
    F = ends * lg - 2.0 * ends + 2.0 * np.arctan2(ends, math.exp(-s)) * math.exp(-s)
    return math.exp(-0.5 * beta * (F[0] - F[1]))


def theta_cdf_oscillatory(x, beta, t_max=None, tol=1e-10, damping=1e-8):
    """CDF from the Fourier-type representation, used as an independent check.

    The ``dt/t`` integral is taken in ``s = log t`` over ``[-40, log t_max]``;
    both inner ``dy`` integrals have closed forms.  The integrand decays like
    ``t**(-beta)``, so by default ``t_max`` is pushed until the damping factor
    ``exp(-beta/2 int log(1 + t^2 (x-y)^2) dy)`` falls below ``damping``.  The
    neglected tail is bounded by that factor divided by ``pi * beta``.
    """
    beta = _check_beta(beta)
    x = float(x)
    if not 0.0 < x < 1.0:
        raise ParameterError("oscillatory representation needs 0 < x < 1")
    if t_max is None:
        c = 2.0 * ((x * math.log(x) if x > 0 else 0.0)
                   + (1 - x) * math.log(1 - x) - 1.0)
        s_max = max(1.0, (-2.0 * math.log(damping) / beta - c) / 2.0)
        while _osc_damping(s_max, x, beta) > damping:
            s_max += 1.0 / beta
    else:
        if not t_max > 0:
            raise ParameterError("t_max must be positive")
        s_max = math.log(t_max)
    s_min = -40.0
    res = integrate_adaptive(lambda s: _osc_integrand(s, x, beta), s_min, s_max, tol=tol)
    trunc = _osc_damping(s_max, x, beta) / (math.pi * beta) + abs(res.abs_error_estimate) / math.pi
    converged = trunc <= 10 * damping / beta
    if not converged:
        warnings.warn(f"oscillatory CDF tail not bounded: truncation error ~{trunc:.2e}",
                      RuntimeWarning, stacklevel=2)
    t_top = math.exp(s_max) if s_max < 700 else math.inf
    return OscillatoryCDF(0.5 + res.value / math.pi, trunc, t_top, converged, s_max)


def rejection_acceptance_rate(beta):
    """Exact acceptance probability of :func:`sample_random_mean`."""
    beta = _check_beta(beta)
    _, C = envelope_constants(beta)
    return math.exp(-math.log(C) - beta - betaln(beta + 1.0, beta + 1.0))


def sample_random_mean(beta, rng, size=None, max_rejections=10_000):
    """Exact draws from ``vartheta_beta`` by rejection from a Beta envelope.

    Proposals come from ``Beta(beta+1, beta+1)``, whose density is
    proportional to ``(z (1-z))**beta``; a proposal is kept with probability
    ``vartheta(z) / (C (e z (1-z))**beta)``.

    Raises :class:`SamplerError` when some draw needs more than
    ``max_rejections`` consecutive proposals, which can only happen if the
    envelope is broken.
    """
    beta = _check_beta(beta)
    _, C = envelope_constants(beta)
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    pending = np.arange(n)
    attempts = np.zeros(n, dtype=np.int64)
    while pending.size:
        z = rng.beta(beta + 1.0, beta + 1.0, size=pending.size)
        u = rng.random(pending.size)
        log_ratio = (log_vartheta(z, beta) - math.log(C)
                     - beta * (1.0 + np.log(z) + np.log1p(-z)))
        accept = np.log(u) <= log_ratio
        out[pending[accept]] = z[accept]
        attempts[pending[~accept]] += 1
        pending = pending[~accept]
        if pending.size and attempts[pending].max() > max_rejections:
            raise SamplerError(
                f"more than {max_rejections} consecutive rejections (beta={beta})")
    if size is None:
        return float(out[0])
    return out.reshape(size)


@dataclass
class RandomMeansLaw:
    """The law ``m_1^beta`` with an optional tabulated CDF for inverse sampling."""

    beta: float
    cdf_table: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self.beta = _check_beta(self.beta)
        if self.cdf_table is not None:
            xs, fs = (np.asarray(a, dtype=float) for a in self.cdf_table)
            if np.any(np.diff(xs) <= 0) or np.any(np.diff(fs) <= 0):
                raise ParameterError("cdf_table must be strictly increasing")
            if abs(fs[0]) > 1e-6 or abs(fs[-1] - 1.0) > 1e-6:
                raise ParameterError("cdf_table must run from 0 to 1")
            self.cdf_table = (xs, fs)

    def pdf(self, x):
        return vartheta(x, self.beta)

    def cdf(self, x):
        return theta_cdf(x, self.beta)

    def with_table(self, n_nodes=4096):
        """Copy carrying a CDF table on ``n_nodes`` Chebyshev-spaced points."""
        j = np.arange(n_nodes)
        xs = 0.5 * (1.0 - np.cos(np.pi * j / (n_nodes - 1)))
        fs = theta_cdf(xs, self.beta)
        xs[0], xs[-1], fs[0], fs[-1] = 0.0, 1.0, 0.0, 1.0
        keep = np.concatenate([[True], np.diff(fs) > 0])
        return RandomMeansLaw(self.beta, (xs[keep], fs[keep]))

    def sample(self, rng, size=None, method="rejection"):
        if method == "rejection":
            return sample_random_mean(self.beta, rng, size=size)
        if method != "table":
            raise ParameterError(f"unknown sampling method {method!r}")
        law = self if self.cdf_table is not None else self.with_table()
        xs, fs = law.cdf_table
        inverse = PchipInterpolator(fs, xs)
        u = rng.random(1 if size is None else size)
        out = np.clip(inverse(u), 0.0, 1.0)
        return float(out.ravel()[0]) if size is None else out

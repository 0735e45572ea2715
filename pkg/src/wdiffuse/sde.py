"""Interacting particle systems on the ordered simplex.

Two systems are simulated, both with noise ``sqrt(2k) dW`` in every
coordinate:

* ``drift="monotone"``: drift ``k grad log rho_k``, invariant law ``m_k``;
* ``drift="explicit"``: the explicit singular drift whose invariant law is the
  Dirichlet-type density ``rho_tilde_k``.

Two time-stepping schemes are offered.  ``scheme="metropolis"`` (the default)
uses the Euler-Maruyama move as a proposal and accepts it with the
Metropolis-Hastings probability for the invariant density, so the invariant
law is preserved exactly at any step size; proposals leaving the open simplex
are rejected and the particles stay put.  ``scheme="euler"`` is the plain
Euler-Maruyama scheme with step halving: a proposal that leaves the simplex is
retried with half the step, at most ``max_halvings`` times, and each step of
length ``dt`` is filled with accepted sub-steps.

Near a collision the drifts above point *towards* the boundary (the invariant
densities blow up there), and the plain scheme then piles particles up at
tiny gaps; it is kept for comparison.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .density import (MAX_K, QUADRATURE_MAX_K, DensityModel, SimplexPoint,
                      TabulatedLogDensity, log_rho_grad, log_rho_tilde, rho_batch)
from .dirichlet import sample_mk, sample_rho_tilde
from .errors import BoundaryError, ParameterError
from .measures import EmpiricalMeasure
from .random_means import log_vartheta
from .stats import StreamKey, derive_stream

__all__ = [
    "SimConfig",
    "Trajectory",
    "StepResult",
    "drift_explicit",
    "drift_monotone",
    "build_target",
    "step",
    "simulate",
    "empirical_measure",
    "resolve_threads",
]

DRIFTS = ("monotone", "explicit")
SCHEMES = ("metropolis", "euler")
MIN_GAP = 1e-14
# For the Metropolis proposal the drift move is shrunk so that it never covers
# more than this fraction of the smallest gap.
TAMING = 0.5
CHUNK = 2048
BLOCK = 256


@dataclass(frozen=True)
class SimConfig:
    k: int
    beta: float
    drift: str = "explicit"
    dt: float = None
    horizon: float = 1.0
    n_traj: int = 1
    seed: int = 0
    record_stride: int = 1
    fd_h_rel: float = 1e-4
    scheme: str = "metropolis"
    max_halvings: int = 20
    allow_mc_density: bool = False

    def __post_init__(self):
        k = self.k
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= MAX_K:
            raise ParameterError(f"k must be an integer in 1..{MAX_K}, got {k!r}")
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if self.drift not in DRIFTS:
            raise ParameterError(f"drift must be one of {DRIFTS}, got {self.drift!r}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.drift == "monotone":
            if not 0 < self.beta / k < 1:
                raise ParameterError("the monotone drift needs beta/k in (0, 1)")
            if k > QUADRATURE_MAX_K and not self.allow_mc_density:
                raise ParameterError(
                    f"monotone drift for k > {QUADRATURE_MAX_K} rests on a Monte Carlo "
                    "density; pass allow_mc_density=True to use it anyway")
        if self.dt is None:
            object.__setattr__(self, "dt", 1e-5 / k)
        if not self.dt > 0 or not self.horizon > 0:
            raise ParameterError("dt and horizon must be positive")
        if self.dt > self.horizon:
            raise ParameterError("dt must not exceed the horizon")
        if self.record_stride < 1:
            raise ParameterError("record_stride must be at least 1")
        ratio = self.horizon / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(ratio, 1.0):
            raise ParameterError("horizon must be an integer multiple of dt")
        if self.n_steps % self.record_stride:
            raise ParameterError("the number of steps must be a multiple of record_stride")
        if self.n_traj < 1:
            raise ParameterError("n_traj must be at least 1")
        StreamKey(int(self.seed))
        if not 0 < self.fd_h_rel < 0.1:
            raise ParameterError("fd_h_rel must lie in (0, 0.1)")
        if not 0 <= self.max_halvings <= 60:
            raise ParameterError("max_halvings must lie in 0..60")

    @property
    def n_steps(self):
        return int(round(self.horizon / self.dt))

    @property
    def n_records(self):
        return self.n_steps // self.record_stride + 1

    def as_dict(self):
        return asdict(self)


@dataclass
class Trajectory:
    """Recorded states of one run; ``states`` has shape ``(len(times), k)``."""

    times: np.ndarray
    states: np.ndarray
    rejected_steps: int = 0
    proposals: int = 0
    degenerate_time: float = None
    mean_dt_eff: float = float("nan")

    @property
    def degenerate(self):
        return self.degenerate_time is not None

    @property
    def acceptance_fraction(self):
        if self.proposals == 0:
            return float("nan")
        return 1.0 - self.rejected_steps / self.proposals

    @property
    def points(self):
        return [SimplexPoint(tuple(s)) for s in self.states]

    @property
    def endpoint(self):
        return self.states[-1]


@dataclass(frozen=True)
class StepResult:
    state: SimplexPoint
    rejected: int = 0
    degenerate: bool = False
    dt_eff: float = field(default=float("nan"))


# ---------------------------------------------------------------- drifts

def _gaps(pts):
    n = pts.shape[0]
    return np.diff(np.concatenate([np.zeros((n, 1)), pts, np.ones((n, 1))], axis=1), axis=1)


def _explicit_drift_rows(beta, k, pts):
    g = _gaps(pts)
    c = np.full(k + 1, beta - k)
    c[0] = c[-1] = beta / 2.0 - k
    t = c / g
    return t[:, :-1] - t[:, 1:]


def drift_explicit(beta, k, x):
    """Explicit singular drift, component ``i``:

        (beta_{i-1} - k) / (x_i - x_{i-1}) - (beta_i - k) / (x_{i+1} - x_i)

    with ``x_0 = 0``, ``x_{k+1} = 1``, ``beta_0 = beta_k = beta/2`` and
    ``beta_i = beta`` otherwise.  This equals ``k grad log rho_tilde_k``.
    Accepts one point or an ``(n, k)`` array.
    """
    arr = np.asarray(x.array if isinstance(x, SimplexPoint) else x, dtype=float)
    pts = np.atleast_2d(arr)
    if pts.shape[1] != k:
        raise ParameterError("dimension mismatch")
    if np.any(_gaps(pts) < MIN_GAP):
        raise BoundaryError(f"a gap is below {MIN_GAP}; the explicit drift is singular there")
    out = _explicit_drift_rows(beta, k, pts)
    return out if arr.ndim > 1 else out[0]


def drift_monotone(model, x, h_rel=1e-4):
    """``k grad log rho_k`` by central differences of the density evaluator."""
    return model.k * log_rho_grad(model, x, h_rel=h_rel)


# ---------------------------------------------------------------- targets
# A target supplies the log invariant density and the drift for rows of
# states; rows must lie in the open simplex.

class ExplicitTarget:
    def __init__(self, beta, k):
        self.beta, self.k = float(beta), int(k)

    def log_density(self, pts):
        return log_rho_tilde(self.beta, self.k, pts)

    def drift(self, pts):
        return _explicit_drift_rows(self.beta, self.k, pts)


class MeanTarget:
    """``k = 1`` monotone system: invariant density ``vartheta_beta``."""

    k = 1

    def __init__(self, beta, h_rel):
        self.beta, self.h_rel = float(beta), h_rel

    def log_density(self, pts):
        return log_vartheta(pts[:, 0], self.beta)

    def drift(self, pts):
        x = pts[:, 0]
        h = self.h_rel * np.minimum(x, 1.0 - x)
        d = (log_vartheta(x + h, self.beta) - log_vartheta(x - h, self.beta)) / (2.0 * h)
        return d[:, None]


class TableTarget:
    """``k = 2`` monotone system on a spline table of ``log rho_2``."""

    k = 2

    def __init__(self, beta):
        self.table = TabulatedLogDensity(beta)

    def log_density(self, pts):
        return self.table(pts)

    def drift(self, pts):
        return 2.0 * self.table.grad(pts)


class DirectTarget:
    """Monotone system evaluated point by point (``k >= 3``; slow)."""

    def __init__(self, beta, k, h_rel):
        self.model = DensityModel(beta, k)
        self.k, self.h_rel = k, h_rel

    def log_density(self, pts):
        v, _ = rho_batch(self.model, pts)
        with np.errstate(divide="ignore"):
            return np.log(v)

    def drift(self, pts):
        return np.array([drift_monotone(self.model, p, self.h_rel) for p in pts])


def build_target(config):
    """Invariant log-density and drift evaluator for ``config``."""
    if config.drift == "explicit":
        return ExplicitTarget(config.beta, config.k)
    if config.k == 1:
        return MeanTarget(config.beta, config.fd_h_rel)
    if config.k == 2:
        return TableTarget(config.beta)
    return DirectTarget(config.beta, config.k, config.fd_h_rel)


# ---------------------------------------------------------------- updates

def _interior(pts):
    return np.all(_gaps(pts) > 0, axis=1) & np.all(np.isfinite(pts), axis=1)


def _proposal_mean(x, b, h):
    # drift move capped at TAMING times the smallest gap
    move = h * b
    reach = np.max(np.abs(move), axis=1) / (TAMING * np.min(_gaps(x), axis=1))
    return x + move / (1.0 + reach)[:, None]


def _metropolis_update(target, x, lp, b, mean, h, z, log_u):
    """One Metropolis-adjusted Euler move for every row."""
    k = x.shape[1]
    var = 2.0 * k * h
    y = mean + math.sqrt(var) * z
    accept = _interior(y)
    lp_y = np.full(len(x), -np.inf)
    b_y = np.zeros_like(x)
    mean_y = np.zeros_like(x)
    if accept.any():
        yi = y[accept]
        lp_y[accept] = target.log_density(yi)
        good = np.isfinite(lp_y[accept])
        idx = np.flatnonzero(accept)[good]
        accept[:] = False
        accept[idx] = True
        if idx.size:
            b_y[idx] = target.drift(y[idx])
            mean_y[idx] = _proposal_mean(y[idx], b_y[idx], h)
            fwd = np.sum((y[idx] - mean[idx]) ** 2, axis=1)
            rev = np.sum((x[idx] - mean_y[idx]) ** 2, axis=1)
            log_ratio = lp_y[idx] - lp[idx] + (fwd - rev) / (2.0 * var)
            accept[idx] = log_u[idx] < log_ratio
    x = np.where(accept[:, None], y, x)
    lp = np.where(accept, lp_y, lp)
    b = np.where(accept[:, None], b_y, b)
    mean = np.where(accept[:, None], mean_y, mean)
    return x, lp, b, mean, accept


def _euler_update(target, x, b, dt, z, retry_normals, max_halvings):
    """Fill one step of length ``dt`` with accepted plain Euler sub-steps.

    ``retry_normals(rows)`` supplies fresh normals for the listed rows.
    Returns the new states and drifts, the number of halvings per row, the
    degenerate mask and the number of accepted sub-steps per row.
    """
    n, k = x.shape
    x = x.copy()
    b = b.copy()
    remaining = np.full(n, dt)
    h = np.full(n, dt)
    halvings = np.zeros(n, dtype=np.int64)
    substeps = np.zeros(n, dtype=np.int64)
    dead = np.zeros(n, dtype=bool)
    floor = dt * 2.0 ** (-max_halvings)
    noise = z.copy()
    active = np.ones(n, dtype=bool)
    while active.any():
        rows = np.flatnonzero(active)
        y = x[rows] + b[rows] * h[rows, None] + np.sqrt(2.0 * k * h[rows, None]) * noise[rows]
        ok = _interior(y)
        if ok.any():
            good = rows[ok]
            b_new = target.drift(y[ok])
            fine = np.all(np.isfinite(b_new), axis=1)
            ok_rows = good[fine]
            x[ok_rows] = y[ok][fine]
            b[ok_rows] = b_new[fine]
            remaining[ok_rows] -= h[ok_rows]
            substeps[ok_rows] += 1
            # rounding can leave a remainder far below the smallest sub-step
            remaining[ok_rows] = np.where(remaining[ok_rows] < 1e-9 * dt, 0.0,
                                          remaining[ok_rows])
            h[ok_rows] = remaining[ok_rows]
            ok = np.isin(rows, ok_rows)
        bad = rows[~ok]
        halvings[bad] += 1
        h[bad] *= 0.5
        exhausted = bad[h[bad] < floor]
        dead[exhausted] = True
        active = (remaining > 0) & ~dead
        redo = np.flatnonzero(active)
        if redo.size:
            noise[redo] = retry_normals(redo)
    return x, b, halvings, dead, substeps


def step(config, x, rng, target=None, noise=None):
    """Advance one state by one step of ``config.dt``.

    ``target`` overrides the drift/density evaluator (any object with
    ``log_density`` and ``drift`` methods) and ``noise`` overrides the
    standard normal vector of the move.
    """
    x = SimplexPoint.of(x)
    if x.k != config.k:
        raise ParameterError("dimension mismatch")
    if not x.interior:
        raise BoundaryError("step needs an interior state")
    target = build_target(config) if target is None else target
    pts = x.array[None, :]
    b = np.asarray(target.drift(pts), dtype=float).reshape(1, -1)
    z = rng.standard_normal((1, x.k)) if noise is None else np.asarray(noise, float).reshape(1, -1)
    if config.scheme == "metropolis":
        lp = np.asarray(target.log_density(pts), dtype=float).reshape(1)
        mean = _proposal_mean(pts, b, config.dt)
        log_u = np.log(rng.random(1))
        y, _, _, _, acc = _metropolis_update(target, pts, lp, b, mean, config.dt, z, log_u)
        return StepResult(SimplexPoint(tuple(y[0])), int(not acc[0]), False, config.dt)
    y, _, halvings, dead, substeps = _euler_update(
        target, pts, b, config.dt, z, lambda rows: rng.standard_normal((rows.size, x.k)),
        config.max_halvings)
    return StepResult(SimplexPoint(tuple(y[0])), int(halvings[0]), bool(dead[0]),
                      config.dt / max(int(substeps[0]), 1))


# ---------------------------------------------------------------- simulation

def resolve_threads(default=None):
    """Worker count: ``WDIFFUSE_THREADS`` if set, else ``default`` or the CPU count."""
    env = os.environ.get("WDIFFUSE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"WDIFFUSE_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise ParameterError("WDIFFUSE_THREADS must be at least 1")
        return n
    return default or min(os.cpu_count() or 1, 8)


class _StreamBuffers:
    """Per-trajectory random streams consumed in fixed blocks.

    Trajectory ``j`` owns the main stream ``(seed, 2j)``, which supplies its
    initial state and then the per-step normals and uniforms, and the retry
    stream ``(seed, 2j + 1)`` for re-drawn normals after a halving.  What a
    trajectory sees therefore depends only on ``(seed, j)``.
    """

    def __init__(self, seed, ids, k):
        self.k = k
        self.main = [derive_stream(StreamKey(seed, 2 * j)) for j in ids]
        self.retry = [derive_stream(StreamKey(seed, 2 * j + 1)) for j in ids]
        self._retry_buf = [np.empty((0, k)) for _ in ids]

    def block(self, steps):
        z = np.stack([g.standard_normal((steps, self.k)) for g in self.main], axis=1)
        u = np.stack([g.random(steps) for g in self.main], axis=1)
        return z, u

    def retry_normals(self, rows):
        out = np.empty((rows.size, self.k))
        for i, r in enumerate(rows):
            buf = self._retry_buf[r]
            if not len(buf):
                buf = self.retry[r].standard_normal((BLOCK, self.k))
            out[i] = buf[0]
            self._retry_buf[r] = buf[1:]
        return out


def _initial_states(config, streams):
    sampler = sample_mk if config.drift == "monotone" else sample_rho_tilde
    return np.array([np.atleast_1d(sampler(config.beta, config.k, g)) for g in streams.main])


def _simulate_chunk(config, target, ids, initial):
    k, n = config.k, len(ids)
    streams = _StreamBuffers(int(config.seed), ids, k)
    x = _initial_states(config, streams) if initial is None else np.array(initial, float)
    n_rec = config.n_records
    states = np.empty((n_rec, n, k))
    states[0] = x
    alive = _interior(x)
    dead_at = np.where(alive, np.nan, 0.0)
    rejected = np.zeros(n, dtype=np.int64)
    proposals = np.zeros(n, dtype=np.int64)
    substeps = np.zeros(n, dtype=np.int64)
    lp = np.full(n, -np.inf)
    b = np.zeros((n, k))
    if alive.any():
        lp[alive] = target.log_density(x[alive])
        alive &= np.isfinite(lp)
        b[alive] = target.drift(x[alive])
    dead_at[~alive] = 0.0
    mean = np.zeros((n, k))
    if alive.any():
        mean[alive] = _proposal_mean(x[alive], b[alive], config.dt)
    dt = config.dt
    done = 0
    while done < config.n_steps:
        steps = min(BLOCK, config.n_steps - done)
        z, u = streams.block(steps)
        log_u = np.log(u)
        for s in range(steps):
            rows = np.flatnonzero(alive)
            if rows.size:
                if config.scheme == "metropolis":
                    xr, lr, br, mr, acc = _metropolis_update(
                        target, x[rows], lp[rows], b[rows], mean[rows], dt, z[s, rows], log_u[s, rows])
                    x[rows], lp[rows], b[rows], mean[rows] = xr, lr, br, mr
                    rejected[rows] += ~acc
                    proposals[rows] += 1
                else:
                    xr, br, halv, dead, sub = _euler_update(
                        target, x[rows], b[rows], dt, z[s, rows],
                        lambda rr: streams.retry_normals(rows[rr]), config.max_halvings)
                    x[rows], b[rows] = xr, br
                    rejected[rows] += halv
                    proposals[rows] += halv + sub
                    substeps[rows] += sub
                    if dead.any():
                        alive[rows[dead]] = False
                        dead_at[rows[dead]] = (done + s + 1) * dt
            t_idx = done + s + 1
            if t_idx % config.record_stride == 0:
                states[t_idx // config.record_stride] = x
        done += steps
    times = np.arange(n_rec) * dt * config.record_stride
    out = []
    for j in range(n):
        if config.scheme == "euler":
            span = config.horizon if np.isnan(dead_at[j]) else dead_at[j]
            dt_eff = span / substeps[j] if substeps[j] else float("nan")
        else:
            dt_eff = dt
        out.append(Trajectory(times.copy(), states[:, j, :].copy(), int(rejected[j]),
                              int(proposals[j]),
                              None if np.isnan(dead_at[j]) else float(dead_at[j]), dt_eff))
    return out


def simulate(config, initial=None, threads=None, target=None):
    """Run ``config.n_traj`` independent trajectories.

    Initial states are exact draws from the invariant law (``m_k`` for the
    monotone drift, ``rho_tilde_k`` for the explicit one) unless ``initial``
    gives an ``(n_traj, k)`` array.  Trajectory ``j`` uses only random
    streams derived from ``(seed, j)``, and trajectories are processed in
    fixed chunks, so the output does not depend on the thread count.
    Trajectories that hit the halving limit are frozen and carry their
    ``degenerate_time``.
    """
    target = build_target(config) if target is None else target
    if initial is not None:
        initial = np.asarray(initial, dtype=float).reshape(config.n_traj, config.k)
    chunks = [np.arange(i, min(i + CHUNK, config.n_traj))
              for i in range(0, config.n_traj, CHUNK)]
    jobs = [(ids, None if initial is None else initial[ids]) for ids in chunks]
    workers = min(resolve_threads(threads), len(jobs))
    if workers <= 1:
        parts = [_simulate_chunk(config, target, ids, init) for ids, init in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _simulate_chunk(config, target, *job), jobs))
    return [t for part in parts for t in part]


def empirical_measure(x):
    """``(1/k) sum_i delta_{x_i}``."""
    x = SimplexPoint.of(x)
    return EmpiricalMeasure(x.array)

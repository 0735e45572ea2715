import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats as sps

from wdiffuse import sde
from wdiffuse.density import DensityModel, log_rho_tilde
from wdiffuse.errors import BoundaryError, ParameterError
from wdiffuse.sde import (MeanTarget, SimConfig, TableTarget, build_target, drift_explicit,
                          drift_monotone, empirical_measure, resolve_threads, simulate, step)
from wdiffuse.stats import ks_one_sample


class FlatTarget:
    """Zero drift and a flat density: only the noise moves the state."""

    def log_density(self, pts):
        return np.zeros(len(pts))

    def drift(self, pts):
        return np.zeros_like(pts)


class PushTarget(FlatTarget):
    """Constant drift to the right, strong enough to leave the interval."""

    def __init__(self, speed):
        self.speed = speed

    def drift(self, pts):
        return np.full_like(pts, self.speed)


interior3 = st.lists(st.floats(0.01, 0.99), min_size=3, max_size=3, unique=True).map(sorted).filter(
    lambda x: min(np.diff([0, *x, 1])) > 1e-3)


def test_k1_explicit_drift_formula():
    beta = 0.5
    for x in (0.1, 0.4, 0.93):
        expected = -(1 - beta / 2) * (1 / x - 1 / (1 - x))
        assert drift_explicit(beta, 1, [x])[0] == pytest.approx(expected, rel=1e-14)


@given(interior3, st.floats(0.1, 2.0))
def test_explicit_drift_is_scaled_score(x, beta):
    x = np.array(x)
    h = 1e-6
    fd = np.array([(log_rho_tilde(beta, 3, x + h * e) - log_rho_tilde(beta, 3, x - h * e)) / (2 * h)
                   for e in np.eye(3)])
    np.testing.assert_allclose(drift_explicit(beta, 3, x), 3 * fd, rtol=1e-5, atol=1e-3)


def test_explicit_drift_rejects_collisions():
    with pytest.raises(BoundaryError):
        drift_explicit(0.5, 2, [0.3, 0.3])
    with pytest.raises(ParameterError):
        drift_explicit(0.5, 2, [0.3])


def test_k1_monotone_drift_routes_agree():
    target = MeanTarget(0.5, 1e-4)
    x = np.array([[0.2], [0.6]])
    direct = [drift_monotone(DensityModel(0.5, 1), p) for p in x]
    np.testing.assert_allclose(target.drift(x), direct, rtol=1e-5)


def test_table_drift_against_density_differences():
    target = TableTarget(0.5)
    pts = np.array([[0.2, 0.5], [0.05, 0.9], [0.6, 0.7]])
    direct = np.array([drift_monotone(DensityModel(0.5, 2), p) for p in pts])
    np.testing.assert_allclose(target.drift(pts), direct, rtol=5e-3, atol=5e-3)


@pytest.mark.parametrize("scheme", ["metropolis", "euler"])
def test_zero_drift_zero_noise_stands_still(scheme, rng):
    cfg = SimConfig(k=2, beta=0.5, dt=1e-3, horizon=1e-3, scheme=scheme)
    res = step(cfg, (0.3, 0.6), rng, target=FlatTarget(), noise=[0.0, 0.0])
    assert res.state.coords == (0.3, 0.6)
    assert res.rejected == 0 and not res.degenerate
    assert res.dt_eff == pytest.approx(1e-3)


def test_noise_only_move_is_exact(rng):
    cfg = SimConfig(k=1, beta=0.5, dt=1e-4, horizon=1e-4, scheme="euler")
    res = step(cfg, (0.5,), rng, target=FlatTarget(), noise=[1.0])
    assert res.state.coords[0] == pytest.approx(0.5 + np.sqrt(2e-4))


def test_euler_halves_until_the_move_fits(rng):
    cfg = SimConfig(k=1, beta=0.5, dt=1e-3, horizon=1e-3, scheme="euler")
    res = step(cfg, (0.5,), rng, target=PushTarget(1e3), noise=[0.0])
    assert res.rejected >= 1
    assert not res.degenerate
    assert res.dt_eff < cfg.dt
    assert 0 < res.state.coords[0] < 1


def test_euler_degenerates_without_halvings(rng):
    cfg = SimConfig(k=1, beta=0.5, dt=1e-3, horizon=1e-3, scheme="euler", max_halvings=0)
    res = step(cfg, (0.5,), rng, target=PushTarget(1e3), noise=[0.0])
    assert res.degenerate


def test_metropolis_rejects_moves_off_the_simplex(rng):
    cfg = SimConfig(k=2, beta=0.5, dt=1e-3, horizon=1e-3)
    res = step(cfg, (0.3, 0.6), rng, target=FlatTarget(), noise=[0.0, -100.0])
    assert res.rejected == 1
    assert res.state.coords == (0.3, 0.6)


def test_step_needs_interior_state(rng):
    with pytest.raises(BoundaryError):
        step(SimConfig(k=2, beta=0.5), (0.4, 0.4), rng)


def test_metropolis_keeps_the_invariant_law_at_coarse_steps():
    # dt far above the default: the accept/reject step still preserves Beta(a, a)
    cfg = SimConfig(k=1, beta=0.5, drift="explicit", dt=1e-3, horizon=0.2, n_traj=3000,
                    seed=4, record_stride=200)
    tr = simulate(cfg)
    end = np.array([t.endpoint[0] for t in tr])
    start = np.array([t.states[0, 0] for t in tr])
    assert np.mean(end != start) > 0.9
    assert ks_one_sample(end, sps.beta(0.25, 0.25).cdf).passes(0.01)


def test_record_stride_row_count():
    cfg = SimConfig(k=1, beta=0.5, dt=1e-4, horizon=0.01, n_traj=2, record_stride=10)
    tr = simulate(cfg)
    assert tr[0].states.shape == (0.01 / (1e-4 * 10) + 1, 1)
    np.testing.assert_allclose(tr[0].times, np.arange(11) * 1e-3)


def test_results_do_not_depend_on_chunking_or_threads(monkeypatch):
    cfg = SimConfig(k=2, beta=0.5, dt=1e-4, horizon=2e-3, n_traj=10, seed=3, record_stride=5)
    ref = simulate(cfg, threads=1)
    monkeypatch.setattr(sde, "CHUNK", 3)
    monkeypatch.setenv("WDIFFUSE_THREADS", "2")
    other = simulate(cfg)
    for a, b in zip(ref, other):
        assert np.array_equal(a.states, b.states)


def test_euler_scheme_runs_and_reports():
    cfg = SimConfig(k=2, beta=0.5, dt=1e-5, horizon=1e-3, n_traj=4, scheme="euler",
                    record_stride=100)
    for t in simulate(cfg):
        lived = t.degenerate_time if t.degenerate else cfg.horizon
        assert t.proposals >= round(lived / cfg.dt)
        assert 0 <= t.acceptance_fraction <= 1
        # nan when a trajectory died before its first accepted sub-step
        assert not t.mean_dt_eff > cfg.dt * (1 + 1e-12)


def test_boundary_initial_state_is_degenerate_at_start():
    cfg = SimConfig(k=2, beta=0.5, dt=1e-4, horizon=1e-3, n_traj=2)
    tr = simulate(cfg, initial=[[0.2, 0.6], [0.3, 1.0]])
    assert not tr[0].degenerate
    assert tr[1].degenerate_time == 0.0
    assert np.all(tr[1].states == tr[1].states[0])


def test_config_validation():
    assert SimConfig(k=4, beta=1.0).dt == pytest.approx(2.5e-6)
    with pytest.raises(ParameterError):
        SimConfig(k=1, beta=0.5, dt=3e-4, horizon=1e-3)
    with pytest.raises(ParameterError):
        SimConfig(k=4, beta=1.0, drift="monotone")
    with pytest.raises(ParameterError):
        SimConfig(k=2, beta=0.5, dt=1e-4, horizon=1e-3, record_stride=3)
    with pytest.raises(ParameterError):
        SimConfig(k=2, beta=0.5, scheme="rk4")
    assert SimConfig(k=1, beta=0.5).as_dict()["scheme"] == "metropolis"


def test_build_target_kinds():
    assert isinstance(build_target(SimConfig(k=1, beta=0.5, drift="monotone")), MeanTarget)
    assert isinstance(build_target(SimConfig(k=3, beta=0.5)), sde.ExplicitTarget)


def test_thread_setting(monkeypatch):
    monkeypatch.setenv("WDIFFUSE_THREADS", "3")
    assert resolve_threads() == 3
    monkeypatch.setenv("WDIFFUSE_THREADS", "zero")
    with pytest.raises(ParameterError):
        resolve_threads()


def test_empirical_measure():
    mu = empirical_measure((0.1, 0.5, 0.9))
    assert mu.k == 3
    assert mu.mean() == pytest.approx(0.5)

"""End-to-end acceptance checks at full size.

Each test prints one ``PASS``/``FAIL`` line with the measured value and the
wall time against its budget.  The runtime budget is part of the check.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sps

from wdiffuse import cli
from wdiffuse.density import (DensityModel, cell_masses_k2, check_hierarchy, log_rho_tilde,
                              rho_batch, rho_upper_shape, upper_bound_constant)
from wdiffuse.dirichlet import sample_mk
from wdiffuse.measures import (EmpiricalMeasure, HistogramMeasure, chi, embed_iota,
                               hat_function, project_J, wasserstein_distance)
from wdiffuse.random_means import (envelope_constants, theta_cdf, theta_cdf_oscillatory,
                                   vartheta)
from wdiffuse.sde import SimConfig, drift_explicit, simulate
from wdiffuse.stats import (StreamKey, chi2_grid_test, derive_stream, ks_one_sample,
                            ks_two_sample)
from wdiffuse.verify import integrate_vartheta, mk_cell_counts


@pytest.fixture
def verdict(capsys):
    def report(title, ok, detail, started, budget):
        elapsed = time.perf_counter() - started
        passed = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'} {title}: {detail} "
                  f"[{elapsed:.1f}s, budget {budget}s]")
        assert ok, detail
        assert elapsed < budget, f"took {elapsed:.1f}s, budget {budget}s"

    return report


def test_vartheta_normalization(verdict):
    t0 = time.perf_counter()
    errs = {}
    for beta in (0.1, 0.3, 0.5, 0.7, 0.9):
        own = abs(integrate_vartheta(beta) - 1)
        ref = abs(integrate.quad(vartheta, 0, 1, args=(beta,), points=[0.5], limit=200,
                                 epsabs=1e-12)[0] - 1)
        errs[beta] = max(own, ref)
    worst = max(errs.values())
    verdict("vartheta normalization", worst <= 1e-6, f"max |mass - 1| = {worst:.2e}", t0, 10)


def test_vartheta_symmetry_and_envelope(verdict):
    t0 = time.perf_counter()
    x = np.arange(1, 1000) / 1000
    sym = env = -math.inf
    for beta in (0.1, 0.3, 0.5, 0.7, 0.9):
        v = vartheta(x, beta)
        sym = max(sym, float(np.max(np.abs(v - v[::-1]))))
        c, C = envelope_constants(beta)
        tilde = (math.e * x * (1 - x)) ** beta
        env = max(env, float(np.max(c * tilde - v)), float(np.max(v - C * tilde)))
    verdict("vartheta symmetry and envelope", sym <= 1e-8 and env <= 0,
            f"symmetry {sym:.1e}, envelope margin {env:.2e}", t0, 30)


def test_cdf_representations_agree(verdict):
    t0 = time.perf_counter()
    x = np.arange(1, 10) / 10
    worst = max(abs(theta_cdf_oscillatory(xi, beta).value - theta_cdf(xi, beta))
                for beta in (0.3, 0.5) for xi in x)
    verdict("cdf representations agree", worst <= 1e-3, f"max difference {worst:.2e}", t0, 60)


def test_small_beta_cdf_is_nearly_uniform(verdict):
    t0 = time.perf_counter()
    x = np.linspace(0, 1, 1001)
    worst = float(np.max(np.abs(theta_cdf(x, 0.01) - x)))
    verdict("small beta limit", worst <= 0.05, f"sup |Theta - x| = {worst:.2e}", t0, 10)


def test_rho_normalization(verdict):
    t0 = time.perf_counter()
    model = DensityModel(0.5, 1)
    e1 = abs(integrate.quad(lambda x: rho_batch(model, [[x]])[0][0], 0, 1, points=[0.5],
                            limit=200)[0] - 1)
    e2 = abs(cell_masses_k2(0.5).sum() - 1)
    verdict("rho normalization", max(e1, e2) <= 1e-3,
            f"k=1 error {e1:.1e}, k=2 error {e2:.1e}", t0, 300)


def test_sampler_matches_density_chi2(verdict):
    t0 = time.perf_counter()
    n = 10 ** 6
    x = sample_mk(0.5, 2, derive_stream(StreamKey(2024, 6)), size=n)
    masses = cell_masses_k2(0.5)
    iu = np.triu_indices(20)
    p = masses[iu] / masses[iu].sum()
    res = chi2_grid_test(mk_cell_counts(x, 20)[iu], p, level=0.01)
    verdict("sampler vs density chi-square", res.passed,
            f"chi2 {res.statistic:.1f} vs critical {res.critical_value:.1f} (dof {res.dof})",
            t0, 300)


def test_hierarchy_identity(verdict):
    t0 = time.perf_counter()
    rng = derive_stream(StreamKey(2024, 7))
    rel = [check_hierarchy(0.4, 1, (x,), 10 ** 6, rng).relative_error for x in (0.3, 0.5, 0.7)]
    verdict("hierarchy identity", max(rel) <= 0.05,
            "relative errors " + ", ".join(f"{r:.2e}" for r in rel), t0, 300)


def test_upper_bound(verdict):
    t0 = time.perf_counter()
    pts = np.sort(derive_stream(StreamKey(2024, 8)).random((1000, 2)), axis=1)
    v, _ = rho_batch(DensityModel(0.5, 2), pts)
    bound = upper_bound_constant(0.5, 2) * np.array([rho_upper_shape(0.5, 2, p) for p in pts])
    ratio = float(np.max(v / bound))
    verdict("upper bound", ratio <= 1, f"max rho / bound = {ratio:.3f}", t0, 300)


def test_explicit_drift_is_scaled_score(verdict):
    t0 = time.perf_counter()
    rng = derive_stream(StreamKey(2024, 9))
    worst = 0.0
    for k in (1, 2, 3):
        for _ in range(100):
            x = np.sort(rng.uniform(0.01, 0.99, k))
            while np.min(np.diff(np.concatenate([[0], x, [1]]))) < 1e-3:
                x = np.sort(rng.uniform(0.01, 0.99, k))
            h = 1e-5 * np.min(np.diff(np.concatenate([[0], x, [1]])))
            fd = np.array([(log_rho_tilde(0.5, k, x + h * e) - log_rho_tilde(0.5, k, x - h * e))
                           / (2 * h) for e in np.eye(k)])
            d = drift_explicit(0.5, k, x)
            worst = max(worst, float(np.linalg.norm(d - k * fd) / np.linalg.norm(d)))
    verdict("explicit drift vs score", worst <= 1e-4, f"max relative error {worst:.1e}", t0, 30)


def test_sde_stationarity_single_particle(verdict):
    t0 = time.perf_counter()
    cfg = SimConfig(k=1, beta=0.5, drift="explicit", dt=1e-5, horizon=5.0, n_traj=64,
                    seed=10, record_stride=500_000)
    tr = simulate(cfg)
    end = np.array([t.endpoint[0] for t in tr])
    ks = ks_one_sample(end, sps.beta(0.25, 0.25).cdf)
    acc = np.mean([t.acceptance_fraction for t in tr])
    verdict("SDE stationarity k=1 explicit", ks.passes(0.01),
            f"KS {ks.statistic:.3f} vs {ks.critical_values[0.01]:.3f}, acceptance {acc:.3f}",
            t0, 600)


def test_sde_stationarity_two_particles(verdict):
    t0 = time.perf_counter()
    cfg = SimConfig(k=2, beta=0.5, drift="monotone", dt=1e-5, horizon=0.5, n_traj=10_000,
                    seed=11, record_stride=50_000)
    tr = simulate(cfg)
    end = np.array([t.endpoint for t in tr])
    ref = sample_mk(0.5, 2, derive_stream(StreamKey(2024, 11)), size=10 ** 5)
    stats = [ks_two_sample(end[:, i], ref[:, i]) for i in range(2)]
    ok = all(s.passes(0.01) for s in stats)
    verdict("SDE stationarity k=2 monotone", ok,
            "; ".join(f"x{i + 1} KS {s.statistic:.4f} vs {s.critical_values[0.01]:.4f}"
                      for i, s in enumerate(stats)), t0, 1800)


def test_reruns_are_byte_identical(verdict, tmp_path):
    t0 = time.perf_counter()
    same = []
    for target in ("random_mean", "dirichlet_grid", "mk", "entropic", "rho_tilde"):
        a, b = tmp_path / f"{target}_a.csv", tmp_path / f"{target}_b.csv"
        cli.main(["sample", "--target", target, "--n", "2000", "--seed", "12", "--out", str(a)])
        manifest = a.with_name(a.name + ".manifest.json")
        cli.main(["sample", "--config", str(manifest), "--out", str(b)])
        same.append(a.read_bytes() == b.read_bytes())
    for drift in ("explicit", "monotone"):
        a, b = tmp_path / f"sim_{drift}_a", tmp_path / f"sim_{drift}_b"
        cli.main(["simulate", "--k", "2", "--drift", drift, "--dt", "1e-4", "--horizon", "0.02",
                  "--n", "6", "--seed", "12", "--record-stride", "20", "--out", str(a)])
        cli.main(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)])
        outputs = json.loads((a / "manifest.json").read_text())["outputs"]
        same.append(len(outputs) == 6)
        same.extend(f.read_bytes() == (b / f.name).read_bytes() for f in a.glob("traj_*.csv"))
    verdict("byte-identical reruns", all(same), f"{sum(same)}/{len(same)} outputs identical",
            t0, 60)


def test_measures_dictionary(verdict):
    t0 = time.perf_counter()
    rng = derive_stream(StreamKey(2024, 13))
    errs = {}
    for k in (1, 4, 16):
        x = np.sort(rng.random(k))
        errs[f"J iota k={k}"] = float(np.max(np.abs(project_J(embed_iota(x), k) - x)))
    t = np.linspace(0, 1, 10_001)
    errs["hat refinement"] = max(
        float(np.max(np.abs(hat_function(i, k, t) - 0.5 * (hat_function(2 * i - 1, 2 * k, t)
                                                          + hat_function(2 * i, 2 * k, t)))))
        for k in (1, 3, 8) for i in range(1, k + 1))
    mus = [EmpiricalMeasure(np.sort(rng.random(5))) for _ in range(3)]
    d = wasserstein_distance
    errs["identity"] = d(mus[0], mus[0])
    errs["symmetry"] = abs(d(mus[0], mus[1]) - d(mus[1], mus[0]))
    errs["triangle"] = max(0.0, d(mus[0], mus[2]) - d(mus[0], mus[1]) - d(mus[1], mus[2]))
    errs["positivity"] = max(0.0, -d(mus[0], mus[1]))
    errs["two diracs"] = abs(d(EmpiricalMeasure([0.2]), EmpiricalMeasure([0.7])) - 0.5)
    errs["uniform to dirac"] = abs(d(HistogramMeasure.uniform(1), EmpiricalMeasure([0.0]))
                                   - 1 / math.sqrt(3))
    x, y = np.sort(rng.random(6)), np.sort(rng.random(6))
    errs["embedded configurations"] = abs(d(chi(embed_iota(x)), chi(embed_iota(y)))
                                          - np.linalg.norm(x - y) / math.sqrt(6))
    name, worst = max(errs.items(), key=lambda kv: kv[1])
    verdict("measures identities", worst <= 1e-12, f"worst {worst:.1e} ({name})", t0, 10)

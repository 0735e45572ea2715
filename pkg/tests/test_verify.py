import json

import numpy as np
import pytest

from wdiffuse import cli
from wdiffuse.sde import SimConfig, simulate
from wdiffuse.verify import (CHECKS, integrate_vartheta, lag_statistic, mk_cell_counts,
                             run_checks)


def test_tampered_tolerance_flips_exit_code(tmp_path):
    out = tmp_path / "report.json"
    args = ["verify", "--only", "measures_dictionary", "--out", str(out)]
    assert cli.main(args) == 0
    assert cli.main(args + ["--tolerance", "measures_dictionary=-1"]) == 1
    report = json.loads(out.read_text())
    assert report["failed"] == ["measures_dictionary"]
    assert report["checks"][0]["tolerance"] == -1


def test_unknown_tolerance_name_is_a_usage_error():
    assert cli.main(["verify", "--only", "determinism", "--tolerance", "nope=1"]) == 2
    assert cli.main(["verify", "--only", "determinism", "--tolerance", "determinism"]) == 2


def test_report_has_hierarchy_relative_error(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["verify", "--only", "hierarchy_k1", "--out", str(out)]) == 0
    check = json.loads(out.read_text())["checks"][0]
    assert check["name"] == "hierarchy_k1"
    assert check["status"] == "pass"
    assert check["relative_error"] <= 0.05


def test_full_only_checks_skip_in_fast_level():
    res = run_checks("fast", only={"sde_stationarity_k2", "convergence"})
    assert [r.status for r in res] == ["skip", "skip"]


def test_level_validation():
    with pytest.raises(ValueError):
        run_checks("medium")


def test_check_names_are_stable():
    assert {"hierarchy_k1", "mk_chi2", "determinism", "measures_dictionary"} <= set(CHECKS)


def test_integrate_vartheta():
    assert abs(integrate_vartheta(0.3) - 1.0) < 1e-9


def test_cell_counts():
    x = np.array([[0.01, 0.02], [0.01, 0.99], [0.5, 0.55], [0.97, 0.99]])
    c = mk_cell_counts(x, 4)
    assert c.sum() == 4
    assert c[0, 0] == 1 and c[0, 3] == 1 and c[2, 2] == 1 and c[3, 3] == 1


def test_lag_statistic_in_range():
    tr = simulate(SimConfig(k=2, beta=0.5, dt=1e-4, horizon=1e-3, n_traj=20, record_stride=10))
    mean, se = lag_statistic(tr)
    assert 0 <= mean <= 1 and se >= 0

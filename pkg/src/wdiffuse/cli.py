"""Command-line front end: ``wdiffuse {density-table,sample,simulate,verify,convergence}``.

Every command writes its outputs atomically and a ``manifest.json`` style
record next to them.  A manifest passed back through ``--config`` replays the
run; explicit flags override values from the config file.

Exit codes: 0 ok, 1 verification failure, 2 usage or parameter error,
3 numerical failure.
"""

import argparse
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .density import DensityModel, rho_batch
from .dirichlet import sample_entropic, sample_grid_marginals, sample_mk, sample_rho_tilde
from .errors import NumericalError, ParameterError
from .random_means import sample_random_mean, theta_cdf, vartheta_envelope
from .sde import DRIFTS, SCHEMES, SimConfig, simulate
from .stats import StreamKey, derive_stream, ks_one_sample
from .verify import LEVELS, convergence_experiment, run_checks

EXIT_OK, EXIT_FAIL, EXIT_PARAM, EXIT_NUMERIC = 0, 1, 2, 3
TARGETS = ("random_mean", "dirichlet_grid", "mk", "entropic", "rho_tilde")

# Built-in defaults; the config file and then explicit flags override them.
DEFAULTS = {
    "density-table": {"beta": 0.5, "k": 1, "grid": 101, "out": "density.csv"},
    "sample": {"target": "random_mean", "beta": 0.5, "k": 2, "grid": 4, "n": 1000,
               "seed": 0, "out": "samples.csv"},
    "simulate": {"k": 1, "beta": 0.5, "drift": "explicit", "dt": None, "horizon": 1.0,
                 "n": 1, "seed": 0, "record_stride": 1, "scheme": "metropolis",
                 "out": "trajectories"},
    "verify": {"level": "fast", "seed": 0, "out": None, "tolerance": [], "only": []},
    "convergence": {"beta": 0.5, "ks": [2, 4, 8], "lag": 0.01, "n": 2000, "seed": 0,
                    "dt": None, "out": "convergence.json"},
}


# ---------------------------------------------------------------- output

def _atomic_write(path, data):
    """Write ``data`` (str) to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    # repr of a Python float round-trips and always uses '.'
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in np.atleast_2d(rows))
    return "\n".join(lines) + "\n"


def _json(obj):
    def default(o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        raise TypeError(f"not JSON serializable: {type(o).__name__}")

    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


def write_manifest(path, command, config, outputs, started, extra=None):
    manifest = {"command": command, "config": config, "seed": config.get("seed"),
                "version": __version__, "wall_time": time.perf_counter() - started,
                "outputs": [str(p) for p in outputs]}
    if extra:
        manifest.update(extra)
    _atomic_write(path, _json(manifest))
    return manifest


def _manifest_path(out):
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------- commands

def density_grid(k, grid):
    """Evaluation points.

    ``k = 1``: the closed grid ``j / (grid - 1)`` (the density vanishes at both
    ends).  ``k >= 2``: cell centres ``(j + 1/2) / grid`` in every coordinate,
    keeping only strictly increasing tuples.
    """
    if grid < 2:
        raise ParameterError("grid must be at least 2")
    if k == 1:
        return (np.arange(grid) / (grid - 1))[:, None]
    centres = (np.arange(grid) + 0.5) / grid
    idx = np.array(np.meshgrid(*[np.arange(grid)] * k, indexing="ij")).reshape(k, -1).T
    idx = idx[np.all(np.diff(idx, axis=1) > 0, axis=1)]
    return centres[idx]


def cmd_density_table(cfg):
    k, beta = int(cfg["k"]), float(cfg["beta"])
    model = DensityModel(beta, k)
    pts = density_grid(k, int(cfg["grid"]))
    vals, errs = rho_batch(model, pts)
    header = [f"x{i + 1}" for i in range(k)] + ["density", "error_estimate"]
    cols = [pts, vals[:, None], errs[:, None]]
    if k == 1:
        lo, hi = vartheta_envelope(pts[:, 0], beta)
        cols += [theta_cdf(pts[:, 0], beta)[:, None], lo[:, None], hi[:, None]]
        header += ["cdf", "lower", "upper"]
    _atomic_write(cfg["out"], csv_text(header, np.hstack(cols)))
    return [cfg["out"]], {"rows": len(pts)}


def draw_samples(cfg):
    """Draws for ``cmd_sample`` as ``(header, rows, report)``."""
    target, beta, n = cfg["target"], float(cfg["beta"]), int(cfg["n"])
    if n < 1:
        raise ParameterError("n must be at least 1")
    rng = derive_stream(StreamKey(int(cfg["seed"]), 0))
    report = {}
    if target == "random_mean":
        x = sample_random_mean(beta, rng, size=n)[:, None]
        header = ["x1"]
        if n >= 30:
            ks = ks_one_sample(x[:, 0], lambda v: theta_cdf(v, beta))
            report["ks_vs_theta_cdf"] = {**ks.as_dict(), "passes_at_1pct": ks.passes(0.01)}
    elif target == "mk":
        k = int(cfg["k"])
        x = np.atleast_2d(sample_mk(beta, k, rng, size=n))
        header = [f"x{i + 1}" for i in range(k)]
        report["all_ordered"] = bool(np.all(np.diff(x, axis=1) >= 0))
    elif target == "rho_tilde":
        k = int(cfg["k"])
        x = np.atleast_2d(sample_rho_tilde(beta, k, rng, size=n))
        header = [f"x{i + 1}" for i in range(k)]
    elif target == "dirichlet_grid":
        grid = int(cfg["grid"])
        if grid < 2:
            raise ParameterError("grid must be at least 2")
        times = np.arange(1, grid) / grid
        x = sample_grid_marginals(times, beta, rng, size=n).values
        header = [f"g_{j}_{grid}" for j in range(1, grid)]
    elif target == "entropic":
        grid = int(cfg["grid"])
        x = np.array([sample_entropic(beta, grid, rng).values for _ in range(n)])
        header = [f"g_{j}_{grid}" for j in range(grid)]
    else:
        raise ParameterError(f"target must be one of {TARGETS}, got {target!r}")
    return header, x, report


def cmd_sample(cfg):
    header, x, report = draw_samples(cfg)
    _atomic_write(cfg["out"], csv_text(header, x))
    return [cfg["out"]], report


def sim_config(cfg):
    return SimConfig(k=int(cfg["k"]), beta=float(cfg["beta"]), drift=cfg["drift"],
                     dt=None if cfg["dt"] is None else float(cfg["dt"]),
                     horizon=float(cfg["horizon"]), n_traj=int(cfg["n"]),
                     seed=int(cfg["seed"]), record_stride=int(cfg["record_stride"]),
                     scheme=cfg["scheme"])


def cmd_simulate(cfg):
    config = sim_config(cfg)
    trajectories = simulate(config)
    out_dir = Path(cfg["out"])
    header = ["t"] + [f"x{i + 1}" for i in range(config.k)]
    outputs, summary = [], []
    for j, tr in enumerate(trajectories):
        path = out_dir / f"traj_{j:04d}.csv"
        _atomic_write(path, csv_text(header, np.column_stack([tr.times, tr.states])))
        outputs.append(path)
        summary.append({"index": j, "degenerate": tr.degenerate,
                        "degenerate_time": tr.degenerate_time,
                        "acceptance_fraction": tr.acceptance_fraction,
                        "rejected_steps": tr.rejected_steps})
    n_dead = sum(t.degenerate for t in trajectories)
    report = {"sim_config": config.as_dict(), "degenerate": n_dead, "trajectories": summary}
    if n_dead == len(trajectories):
        report["error"] = "all trajectories degenerate"
    return outputs, report


def _parse_tolerances(items):
    out = {}
    for item in items or []:
        name, sep, value = str(item).partition("=")
        if not sep:
            raise ParameterError(f"tolerance override must be NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ParameterError(f"tolerance for {name!r} is not a number: {value!r}")
    return out


def cmd_verify(cfg):
    if cfg["level"] not in LEVELS:
        raise ParameterError(f"level must be one of {LEVELS}")
    tolerances = _parse_tolerances(cfg["tolerance"])
    try:
        results = run_checks(cfg["level"], int(cfg["seed"]), tolerances,
                             only=cfg["only"] or None)
    except KeyError as exc:
        raise ParameterError(str(exc.args[0]))
    for r in results:
        print(f"{r.status.upper():4s} {r.name:26s} value={r.value:.4g} "
              f"tol={r.tolerance:.4g} ({r.seconds:.1f}s)")
    report = {"level": cfg["level"], "seed": cfg["seed"],
              "checks": [r.as_dict() for r in results],
              "failed": [r.name for r in results if r.status == "fail"]}
    outputs = []
    if cfg["out"]:
        _atomic_write(cfg["out"], _json(report))
        outputs.append(cfg["out"])
    return outputs, report


def cmd_convergence(cfg):
    ks = tuple(int(k) for k in cfg["ks"])
    report = convergence_experiment(beta=float(cfg["beta"]), ks=ks, lag=float(cfg["lag"]),
                                    n_traj=int(cfg["n"]), seed=int(cfg["seed"]),
                                    dt=None if cfg["dt"] is None else float(cfg["dt"]))
    for row in report["rows"]:
        print(f"k={row['k']} drift={row['drift']} S={row['statistic']:.6f} "
              f"se={row['stderr']:.2e}")
    print(f"excess={report['excess']:.3e}")
    _atomic_write(cfg["out"], _json(report))
    return [cfg["out"]], {"excess": report["excess"]}


COMMANDS = {
    "density-table": cmd_density_table,
    "sample": cmd_sample,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
}


# ---------------------------------------------------------------- parsing

def build_parser():
    parser = argparse.ArgumentParser(prog="wdiffuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with settings or a manifest to replay")
        for flag, kwargs in flags:
            p.add_argument(flag, default=None, **kwargs)
        return p

    beta = ("--beta", {"type": float})
    k = ("--k", {"type": int})
    seed = ("--seed", {"type": int})
    n = ("--n", {"type": int, "help": "number of rows or trajectories"})
    out = ("--out", {})
    grid = ("--grid", {"type": int})
    dt = ("--dt", {"type": float})
    add("density-table", "tabulate the density on a grid", beta, k, grid, out)
    add("sample", "draw from one of the exact samplers",
        ("--target", {"choices": TARGETS}), beta, k, grid, n, seed, out)
    add("simulate", "run the particle SDE", k, beta, ("--drift", {"choices": DRIFTS}), dt,
        ("--horizon", {"type": float}), n, seed, ("--record-stride", {"type": int}),
        ("--scheme", {"choices": SCHEMES}), out)
    add("verify", "run the numerical checks", ("--level", {"choices": LEVELS}), seed, out,
        ("--tolerance", {"action": "append", "metavar": "NAME=VALUE"}),
        ("--only", {"action": "append", "metavar": "NAME"}))
    add("convergence", "lag statistics of the explicit systems for growing k", beta,
        ("--ks", {"type": int, "nargs": "+"}), ("--lag", {"type": float}), n, seed, dt, out)
    return parser


def resolve_config(args):
    """Defaults, then the ``--config`` file, then flags given on the command line."""
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ParameterError(f"cannot read config {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise ParameterError("config must be a JSON object")
        if "config" in loaded and "command" in loaded:
            if loaded["command"] != args.command:
                raise ParameterError(
                    f"manifest is for {loaded['command']!r}, not {args.command!r}")
            loaded = loaded["config"]
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = resolve_config(args)
        outputs, report = COMMANDS[args.command](cfg)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command == "simulate":
        manifest = Path(cfg["out"]) / "manifest.json"
    elif args.command == "verify":
        manifest = _manifest_path(cfg["out"]) if cfg["out"] else None
    else:
        manifest = _manifest_path(cfg["out"])
    if manifest is not None:
        write_manifest(manifest, args.command, cfg, outputs, started, {"report": report})
    if args.command == "verify" and report["failed"]:
        return EXIT_FAIL
    if args.command == "simulate" and "error" in report:
        print(f"numerical failure: {report['error']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

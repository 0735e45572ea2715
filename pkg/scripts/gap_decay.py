"""Empirical decay of rho_2 as two particles, or a particle and the wall, come together.

Writes a CSV of (path, gap, density) and prints the fitted log-log slope of
each path next to the exponents ``2 beta/k - 1`` and ``beta/k - 1``.  Nothing
is asserted: whether the first can be improved to the second is open.
"""

import argparse
import sys

import numpy as np

from wdiffuse.cli import csv_text
from wdiffuse.density import DensityModel, rho_batch


def paths(gaps, centre):
    return {
        "collision": np.column_stack([centre - gaps / 2, centre + gaps / 2]),
        "left_wall": np.column_stack([gaps, np.full_like(gaps, centre)]),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--centre", type=float, default=0.5)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--smallest", type=float, default=1e-6)
    p.add_argument("--out", default="gap_decay.csv")
    args = p.parse_args(argv)

    beta, k = args.beta, 2
    model = DensityModel(beta, k)
    gaps = np.geomspace(args.smallest, 0.1, args.points)
    rows = []
    print(f"reference exponents: 2b/k-1 = {2 * beta / k - 1:.3f}, b/k-1 = {beta / k - 1:.3f}")
    for index, (name, pts) in enumerate(paths(gaps, args.centre).items()):
        vals, _ = rho_batch(model, pts)
        # slope over the smallest decade
        tail = gaps <= 10 * gaps[0]
        slope = np.polyfit(np.log(gaps[tail]), np.log(vals[tail]), 1)[0]
        print(f"{name:10s} fitted exponent {slope:+.4f}")
        rows.extend([index, g, v] for g, v in zip(gaps, vals))
    with open(args.out, "w", newline="\n") as fh:
        fh.write(csv_text(["path", "gap", "density"], np.array(rows)))
    print(f"wrote {args.out} (path 0 = collision, 1 = left wall)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

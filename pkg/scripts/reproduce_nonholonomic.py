"""Nonholonomic integrator: discount thresholds, iteration thresholds over a
discount sweep, PI on the 41^3 grid at gamma = 0.86, and the envelope check at i = 20."""
import argparse
import sys

from picertify.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/nonholonomic")
    ap.add_argument("--grid-points", type=int, default=41)
    a = ap.parse_args()
    sys.exit(main(["reproduce", "nonholonomic", "--out", a.out, "--grid-points", str(a.grid_points)]))

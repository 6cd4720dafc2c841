"""LQ examples: scalar PI from a non-stabilizing gain against the Riccati fixed point,
and the two-state instance with thresholds, Schur check, and exponential envelope."""
import argparse
import sys

from picertify.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/lq")
    a = ap.parse_args()
    sys.exit(main(["reproduce", "lq", "--out", a.out]))

"""PI against value iteration on seeded random finite problems.

Prints one CSV row per seed: sup-norm gap to the oracle, final Bellman residual,
worst monotonicity margin, worst near-optimality margin and iteration count.
"""
import argparse
import csv
import sys
import time

import numpy as np

from picertify.pi import run_pi, value_iteration_oracle
from picertify.system import random_finite_problem
from picertify.verify import check_lemma2, check_theorem1


def run(seed, n_states, n_actions, gamma):
    p, _ = random_finite_problem(n_states, n_actions, seed, gamma)
    t = time.perf_counter()
    r = run_pi(p)
    v = value_iteration_oracle(p)
    gap = float(np.max(np.abs(r.final_value.table - v.table)))
    m2 = check_lemma2(r).worst_margin
    m4 = check_theorem1(p, r, v)[0].worst_margin
    return [seed, gap, r.bellman_residuals[-1], m2, m4, len(r) - 1, time.perf_counter() - t]


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--states", type=int, default=50)
    ap.add_argument("--actions", type=int, default=5)
    ap.add_argument("--gamma", type=float, default=0.95)
    a = ap.parse_args()
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["seed", "sup_gap", "residual", "monotone_margin", "near_opt_margin", "iterations", "seconds"])
    for s in range(a.seeds):
        w.writerow(run(s, a.states, a.actions, a.gamma))

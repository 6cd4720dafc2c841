"""Compare the general iteration threshold (ultimate bound delta from level Delta,
exponential beta*) with the delta-free linear-gain threshold on sampled triples."""
import argparse
import csv
import sys

import numpy as np

from picertify import certificates as C
from picertify import compfn as cf


def nonholonomic_parts():
    lg = C.LinearGainBundle(1.0, 0.0, 22 / 5, 22 / 3, 256 / 225)
    det = C.DetectabilityCertificate.zero(cf.linear(1.0))
    init = C.InitialPolicyCertificate(22 / 3, 256 / 225)
    sa5 = C.SA5Certificate(cf.linear(22 / 5), lg.gamma_star, lg.gamma0)
    return lg, det, init, sa5


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    lg, det, init, sa5 = nonholonomic_parts()
    rng = np.random.default_rng(a.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["gamma", "delta", "Delta", "istar_general", "istar_linear", "diff"])
    for _ in range(a.n):
        g = lg.gamma_star + (lg.gamma0 - lg.gamma_star) * (0.05 + 0.9 * rng.random())
        Delta = 10 ** rng.uniform(-1, 1)
        delta = Delta * 10 ** rng.uniform(-2, 0)
        tb = C.build_table1(det, init, sa5, g, "exponential", lg)
        ig, il = C.istar_general(tb, delta, Delta), C.istar_linear(lg, g)
        w.writerow([g, delta, Delta, ig, il, ig - il])

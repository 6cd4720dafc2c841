"""Acceptance criteria, runnable as a script or under pytest.

``python tests/test_acceptance.py`` prints one PASS/FAIL line per criterion.
Each criterion is a function returning ``(passed, summary)``; the pytest
wrappers assert on the same functions, so both entry points agree.
"""
from __future__ import annotations

import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from picertify import certificates as C
from picertify import compfn as cf
from picertify import verify as V
from picertify.pi import optimal_closed_loop, run_pi, value_iteration_oracle
from picertify.system import (build_lq2_example, build_lq_example, build_nonholonomic_example, is_schur,
                              random_finite_problem, random_policy)

N_RANDOM = 20
NH_GAMMA = 0.86
NH_ISTAR = 20
LQ2_GAMMA = 0.6


# -- shared work ---------------------------------------------------------------

@lru_cache(maxsize=None)
def random_runs():
    """PI (from seeded random policies) and value iteration on the 20 random problems, with wall time."""
    t0 = time.perf_counter()
    out = []
    for seed in range(N_RANDOM):
        p, W = random_finite_problem(50, 5, seed)
        run = run_pi(p, random_policy(p, seed))
        out.append((seed, p, W, run, value_iteration_oracle(p)))
    return out, time.perf_counter() - t0


@lru_cache(maxsize=None)
def nonholonomic(points_per_axis: int = 41):
    problem = build_nonholonomic_example(NH_GAMMA, points_per_axis=points_per_axis)
    return problem, C.certify(problem)


@lru_cache(maxsize=None)
def lq2():
    problem = build_lq2_example(LQ2_GAMMA)
    return problem, C.certify(problem)


# -- criteria ------------------------------------------------------------------

def criterion_1():
    """Published nonholonomic constants and the iteration threshold at gamma = 0.86."""
    t0 = time.perf_counter()
    _, bundle = nonholonomic(9)
    e0 = abs(bundle.gamma0 - 225 / 256)
    es = abs(bundle.gamma_star - 17 / 22)
    istar = C.istar_linear(bundle.lg, NH_GAMMA)
    dt = time.perf_counter() - t0
    ok = e0 <= 1e-12 and es <= 1e-12 and istar == NH_ISTAR
    return ok, (f"|gamma0-225/256|={e0:.1e} |gamma*-17/22|={es:.1e} i*(0.86)={istar} "
                f"(expected {NH_ISTAR}) in {dt * 1e3:.0f} ms")


def criterion_2():
    """PI against value iteration on 20 random 50x5 problems."""
    runs, dt = random_runs()
    err = max(float(np.max(np.abs(run.final_value.table - vi.table))) for _, _, _, run, vi in runs)
    res = max(run.bellman_residuals[-1] for _, _, _, run, _ in runs)
    iters = [len(run) - 1 for _, _, _, run, _ in runs]
    ok = err <= 1e-8 and res <= 1e-10 and dt < 10.0
    return ok, (f"max sup|V_PI - V_VI|={err:.2e} max residual={res:.2e} "
                f"improvements {min(iters)}..{max(iters)} in {dt:.2f} s")


def criterion_3():
    """Monotone value iterates on every criterion-2 run."""
    runs, _ = random_runs()
    margins = [V.check_lemma2(run, tol=1e-9).worst_margin for _, _, _, run, _ in runs]
    worst = min(margins)
    return worst >= -1e-9, f"min over runs, states, iterations of V^i - V^(i+1) = {worst:.3e}"


def criterion_4():
    """First near-optimality inequality along the optimal closed loop."""
    runs, _ = random_runs()
    worst, witness = math.inf, None
    for seed, p, _, run, vi in runs:
        c = V.check_theorem1(p, run, vi, optimal_closed_loop(p, vi), tol=1e-9)[0]
        if c.worst_margin < worst:
            worst, witness = c.worst_margin, (seed, c.witness)
    ok = worst >= -1e-9
    extra = "" if ok else f" witness seed={witness[0]} {witness[1]}"
    return ok, f"min slack of the first inequality = {worst:.3e}{extra}"


def criterion_5():
    """Scalar LQ from a non-stabilizing gain, and Schur iterates with the exponential envelope on a 2-state LQ."""
    scalar = build_lq_example()
    srun = run_pi(scalar)
    perr = abs(float(srun.final_value.P[0, 0]) - math.sqrt(5.0))
    g0_scalar = C.certify(scalar).gamma0
    problem, bundle = lq2()
    istar = C.istar_linear(bundle.lg, LQ2_GAMMA)
    run = run_pi(problem)
    last = max(istar, len(run) - 1)
    schur = all(is_schur(problem.A + problem.B @ run.policy(i).K) for i in range(istar, last + 1))
    sample = V.sample_states(problem, 100, seed=0, Delta=1.0)
    cor = V.check_corollary1(problem, run.policy(istar), istar, bundle.lg, LQ2_GAMMA, sample, 200, 1e-9, istar)
    in_range = bundle.in_range(LQ2_GAMMA)
    ok = (perr <= 1e-8 and abs(g0_scalar - 0.25) <= 1e-12 and in_range and schur
          and cor.passed and cor.exact_margin >= -1e-9)
    return ok, (f"scalar |P - sqrt(5)|={perr:.2e} gamma0={g0_scalar:.6g}; 2-state gamma*={bundle.gamma_star:.6g} "
                f"gamma0={bundle.gamma0:.6g} i*={istar} Schur for i>={istar}: {schur} "
                f"envelope margin={cor.exact_margin:.3e}")


def criterion_6(n: int = 1000, seed: int = 0):
    """gamma* never exceeds either alternative threshold."""
    rng = np.random.default_rng(seed)
    violations = []
    for _ in range(n):
        a_W = 10 ** rng.uniform(-2, 2)
        a_W_bar = 0.0 if rng.random() < 0.2 else 10 ** rng.uniform(-2, 2)
        a_Vs = 10 ** rng.uniform(-2, 2)
        lg = C.LinearGainBundle(a_W, a_W_bar, a_Vs)
        if not C.remark3_holds(lg):
            violations.append((a_W, a_W_bar, a_Vs, C.remark3_compare(lg)))
    return not violations, f"{len(violations)} violations over {n} bundles"


def istar_pairs(n: int = 50, seed: int = 0):
    """(gamma, delta, Delta, general threshold, linear threshold) on sampled triples."""
    _, bundle = nonholonomic(9)
    lg = bundle.lg
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        g = lg.gamma_star + (lg.gamma0 - lg.gamma_star) * (0.05 + 0.9 * rng.random())
        Delta = 10 ** rng.uniform(-1, 1)
        delta = Delta * 10 ** rng.uniform(-2, 0)
        table = bundle.table1(g, "exponential")
        rows.append((g, delta, Delta, C.istar_general(table, delta, Delta), C.istar_linear(lg, g)))
    return rows


def criterion_7():
    """General and linear-gain iteration thresholds agree within one iteration."""
    rows = istar_pairs()
    bad = [r for r in rows if abs(r[3] - r[4]) > 1]
    shown = "; ".join(f"gamma={g:.4f} delta={d:.3g} Delta={D:.3g}: general={a} linear={b}"
                      for g, d, D, a, b in bad[:3])
    more = f" (+{len(bad) - 3} more)" if len(bad) > 3 else ""
    return not bad, f"{len(rows) - len(bad)}/{len(rows)} agree within 1" + (f"; {shown}{more}" if bad else "")


def criterion_8():
    """Exponential envelope on the 41^3 grid at gamma = 0.86, i = 20, within the grid slack."""
    t0 = time.perf_counter()
    problem, bundle = nonholonomic(41)
    run = run_pi(problem)
    policy = run.policy(NH_ISTAR)
    sample = V.sample_states(problem, 100, seed=0, Delta=problem.delta_grid)
    c = V.check_corollary1(problem, policy, NH_ISTAR, bundle.lg, NH_GAMMA, sample, 200, 1e-9, NH_ISTAR)
    replay_ok = True
    if c.witness is not None:
        excess = V.replay_witness(problem, policy, c.witness)
        replay_ok = math.isclose(excess, -c.exact_margin, rel_tol=1e-9, abs_tol=1e-9)
    dt = time.perf_counter() - t0
    separate = c.exact_margin is not None and c.slack is not None
    ok = c.passed and replay_ok and separate and dt < 120.0
    return ok, (f"exact margin={c.exact_margin:.4g} eps_grid={c.slack:.4g} "
                f"witness replay {'ok' if replay_ok else 'MISMATCH'} in {dt:.1f} s")


def certified_tables():
    """Every Lyapunov-construction bundle the toolkit certifies on the shipped examples."""
    out = []
    nh_problem, nh = nonholonomic(9)
    lq_problem, lq = lq2()
    cases = [("nonholonomic", nh, nh_problem.delta_grid), ("lq2", lq, 1.0)]
    for seed in range(5):
        p, W = random_finite_problem(50, 5, seed)
        b = C.certify(p, W=W)
        cases.append((f"random{seed}", b, float(p.sigma.max())))
    for name, bundle, s_max in cases:
        lo, hi = bundle.gamma_star, bundle.gamma0
        if not lo < hi:
            continue
        for g in np.linspace(lo, hi, 7)[1:-1]:
            modes = ["iterated"] + (["exponential"] if bundle.lg is not None else [])
            for mode in modes:
                try:
                    t = bundle.table1(float(g), mode)
                except C.FormulaDomainError:
                    continue
                out.append((f"{name} gamma={g:.4f} {mode}", t, s_max))
    return out


def roundtrip_instances(n: int = 200, seed: int = 0):
    rng = np.random.default_rng(seed)
    pos = lambda: float(rng.uniform(0.05, 20.0))  # noqa: E731
    expo = lambda: float(rng.uniform(0.3, 3.0))  # noqa: E731
    fs = []
    for j in range(n):
        kind = j % 5
        if kind == 0:
            fs.append(cf.linear(pos()))
        elif kind == 1:
            fs.append(cf.power(expo(), pos()))
        elif kind == 2:
            fs.append(cf.add(cf.power(expo(), pos()), cf.linear(pos())))
        elif kind == 3:
            fs.append(cf.scaled(pos(), cf.power(expo())))
        else:
            fs.append(cf.compose(cf.power(expo(), pos()), cf.add(cf.linear(pos()), cf.power(expo()))))
    return fs


def criterion_9():
    """KL lattice on every certified bundle, and inverse round trips at 1e-10."""
    tables = certified_tables()
    kl_fail = []
    for label, t, s_max in tables:
        for which in ("beta_star", "beta_tilde"):
            chk = cf.check_kl_lattice(getattr(t, which), s_max, k_probe=20000)
            if not chk.passed:
                kl_fail.append(f"{label} {which}")
    rng = np.random.default_rng(1)
    worst = 0.0
    for f in roundtrip_instances():
        for s0 in 10 ** rng.uniform(-6, 3, 50):
            y = f(float(s0))
            s = cf.invert(f, y)
            worst = max(worst, abs(f(s) - y) / max(1.0, y))
    ok = not kl_fail and worst <= 1e-10
    return ok, (f"{len(tables)} bundles x 2 KL bounds, {len(kl_fail)} lattice failures"
                + (f" ({', '.join(kl_fail[:3])})" if kl_fail else "")
                + f"; worst relative round-trip error {worst:.2e} over 200x50 points")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9]


def main() -> int:
    failed = 0
    for n, crit in enumerate(CRITERIA, start=1):
        try:
            ok, msg = crit()
        except Exception as e:  # a crash is a failure, reported on the same line
            ok, msg = False, f"raised {type(e).__name__}: {e}"
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {msg}", flush=True)
    return 1 if failed else 0


# -- pytest entry points -------------------------------------------------------

@pytest.mark.parametrize("n", range(1, len(CRITERIA) + 1))
def test_criterion(n):
    ok, msg = CRITERIA[n - 1]()
    print(f"criterion {n}: {msg}")
    assert ok, msg


if __name__ == "__main__":
    sys.exit(main())

import copy

import numpy as np
import pytest

from picertify.system import random_policy
from picertify import certificates as C
from picertify import verify as V
from picertify.pi import PIRun, ValueFn, optimal_closed_loop, run_pi, value_iteration_oracle
from picertify.system import build_lq2_example, build_lq_example, build_toy3, random_finite_problem


@pytest.fixture(scope="module")
def certified_random():
    p, W = random_finite_problem(50, 5, 4, 0.9)
    h0 = random_policy(p, 4)
    return p, C.certify(p, h0, W=W), run_pi(p, h0)


def test_lemma2_converged_run_has_zero_margin():
    run = run_pi(build_toy3())
    last = PIRun(run.iterates + [run.iterates[-1]], run.bellman_residuals * 2, run.converged_at, run.gamma)
    assert V.check_lemma2(last).worst_margin == pytest.approx(0.0, abs=1e-15)


def test_lemma2_perturbed_iterate_fails_with_witness(certified_random):
    _, _, run = certified_random
    bad = copy.deepcopy(run)
    h, v = bad.iterates[1]
    x = int(np.argmin(run.value(0).table - v.table))
    t = v.table.copy()
    t[x] += 1.0
    bad.iterates[1] = (h, ValueFn(table=t))
    c = V.check_lemma2(bad)
    assert not c.passed
    assert c.witness == {"iteration": 0, "state_index": x}


@pytest.mark.parametrize("seed", range(5))
def test_theorem1_first_inequality_on_random_problems(seed):
    p, _ = random_finite_problem(50, 5, seed)
    run = run_pi(p, random_policy(p, seed))
    v = value_iteration_oracle(p)
    (c,) = V.check_theorem1(p, run, v)
    assert c.passed


def test_theorem1_at_iteration_zero_is_tight():
    p, _ = random_finite_problem(20, 3, 1)
    run = run_pi(p, random_policy(p, 1))
    v = value_iteration_oracle(p)
    (c,) = V.check_theorem1(p, run, v, max_i=0)
    assert c.worst_margin == pytest.approx(0.0, abs=1e-9)


def test_full_suite_on_certified_random(certified_random):
    p, b, run = certified_random
    assert b.in_range(p.gamma)
    rep = V.verify_all(p, run, b)
    kinds = {c.kind for c in rep.checks}
    assert {"thm1-full-bound", "thm2-lyapunov-bounds", "thm2-lyapunov-decrease", "prop1-kl"} <= kinds
    assert rep.passed, [c.to_dict() for c in rep.failures()]


def test_theorem2_and_proposition1_on_lq():
    p = build_lq2_example()
    b = C.certify(p)
    run = run_pi(p)
    for c in V.check_theorem2(p, run, b, V.sample_states(p)):
        assert c.passed
    h_star = optimal_closed_loop(p, value_iteration_oracle(p))
    for c in V.check_proposition1(p, h_star, b.table1(p.gamma), V.sample_states(p)):
        assert c.passed


def test_corollary1_exact_on_lq_after_istar():
    p = build_lq2_example()
    b = C.certify(p)
    run = run_pi(p)
    i = C.istar_linear(b.lg, p.gamma)
    c = V.check_corollary1(p, run.policy(i), i, b.lg, p.gamma, V.sample_states(p), 200, 1e-9, i)
    assert c.passed and c.slack == 0.0 and not c.informational
    assert c.details["c1"] >= 1


def test_corollary1_below_istar_is_informational_and_replays():
    p = build_lq2_example()
    b = C.certify(p)
    run = run_pi(p)
    c = V.check_corollary1(p, run.policy(0), 0, b.lg, p.gamma, V.sample_states(p), 200, 1e-9, istar=3)
    assert c.informational and not c.passed
    assert not c.counts_as_failure
    excess = V.replay_witness(p, run.policy(0), c.witness)
    assert excess == pytest.approx(-c.worst_margin, rel=1e-9)


def test_theorem3_attractor_sample_trivially_settles():
    p = build_toy3()
    b = C.certify(p)
    run = run_pi(p)
    settle, bounded = V.check_theorem3(p, run.final_policy, 5, b, 0.1, 2.0, np.array([0]), 100)
    assert settle.passed and bounded.passed and settle.details["K_settle"] == 0


def test_theorem3_below_threshold_is_informational():
    p = build_lq_example(gamma=0.2)
    run = run_pi(p)
    b = C.certify(build_lq2_example())
    c, _ = V.check_theorem3(p, run.policy(0), 0, b, 1e-3, 1.0, V.sample_states(p, 10), 100, istar=5)
    assert c.informational and not c.passed and not c.counts_as_failure


def test_settle_time():
    s = np.array([5.0, 3.0, 0.5, 2.0] + [0.1] * 60)
    assert V.settle_time(s, 1.0) == 4
    assert V.settle_time(np.ones(60), 0.5) is None


def test_checks_are_deterministic(certified_random):
    p, b, run = certified_random
    a = V.verify_all(p, run, b, seed=3).to_json()
    c = V.verify_all(p, run, b, seed=3).to_json()
    assert a == c


def test_report_csv_has_one_row_per_check(certified_random):
    p, b, run = certified_random
    rep = V.verify_all(p, run, b)
    lines = rep.to_csv().strip().split("\n")
    assert lines[0].startswith("kind,gamma,i,")
    assert len(lines) == len(rep.checks) + 1

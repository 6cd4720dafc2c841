import itertools
import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from picertify.system import random_policy
from picertify.errors import AdmissibilityError, InfeasibleInitialPolicyError
from picertify.pi import (Policy, PIRun, bellman_residual, evaluate_policy, improve_policy, run_pi,
                          value_iteration_oracle)
from picertify.system import FiniteProblem, build_lq2_example, build_lq_example, build_toy3, random_finite_problem


def test_toy3_matches_policy_enumeration():
    p = build_toy3()
    best = np.full(3, np.inf)
    for h in itertools.product(range(2), repeat=3):
        best = np.minimum(best, evaluate_policy(p, np.array(h)).table)
    run = run_pi(p)
    np.testing.assert_allclose(run.final_value.table, best, atol=1e-12)
    np.testing.assert_allclose(best, [0.0, 1.0, 2.5])
    assert run.converged_at <= 3
    assert run.bellman_residuals[-1] <= 1e-10


def test_improvement_breaks_ties_to_lowest_action():
    p = FiniteProblem(np.zeros((2, 3), int), np.array([[0, 0, 0], [1, 1, 2.0]]), np.array([0, 1.0]), 0.5)
    h = improve_policy(p, evaluate_policy(p, np.array([2, 2])))
    assert list(h.table) == [0, 0]


def test_inadmissible_policy_rejected():
    p = FiniteProblem(np.zeros((2, 2), int), np.ones((2, 2)), np.zeros(2), 0.5,
                      admissible=np.array([[1, 0], [1, 1]], bool))
    with pytest.raises(AdmissibilityError):
        evaluate_policy(p, np.array([1, 0]))


def test_scalar_lq_hand_fixed_point():
    # P = 1 + 4 g P - 4 g^2 P^2 / (1 + g P) with g = 0.2 reduces to 0.2 P^2 = 1.
    p = build_lq_example()
    run = run_pi(p)
    assert abs(run.final_value.P[0, 0] - math.sqrt(5.0)) <= 1e-8
    Ps = [run.value(i).P[0, 0] for i in range(len(run))]
    assert Ps[0] == pytest.approx(1.0 / (1.0 - 0.2 * 4.0))
    assert all(a >= b - 1e-12 for a, b in zip(Ps, Ps[1:]))


def test_lq_infeasible_start_reports_rate():
    with pytest.raises(InfeasibleInitialPolicyError) as e:
        run_pi(build_lq_example(gamma=0.3))
    assert e.value.rate == pytest.approx(math.sqrt(0.3) * 2.0)


def test_lq_pi_matches_scipy_dare_in_scaled_form():
    p = build_lq2_example(0.6)
    g = p.gamma
    P = sla.solve_discrete_are(math.sqrt(g) * p.A, math.sqrt(g) * p.B, p.Q, p.R)
    run = run_pi(p)
    np.testing.assert_allclose(run.final_value.P, P, atol=1e-9)
    np.testing.assert_allclose(value_iteration_oracle(p).P, P, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.3, 0.97))
def test_pi_matches_value_iteration(seed, gamma):
    p, _ = random_finite_problem(30, 4, seed, gamma)
    run = run_pi(p, random_policy(p, seed))
    v = value_iteration_oracle(p)
    assert np.max(np.abs(run.final_value.table - v.table)) <= 1e-8
    assert bellman_residual(p, run.final_value) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_values_are_monotone_along_iterations(seed):
    p, _ = random_finite_problem(30, 4, seed, 0.9)
    run = run_pi(p, random_policy(p, seed))
    for i in range(len(run) - 1):
        assert np.all(run.value(i).table - run.value(i + 1).table >= -1e-9)


def test_pirun_roundtrip_and_clamping():
    p = build_toy3()
    run = run_pi(p)
    back = PIRun.from_dict(run.to_dict())
    assert back.policy(100).same_as(run.final_policy)
    np.testing.assert_array_equal(back.value(0).table, run.value(0).table)
    lq = run_pi(build_lq_example())
    assert PIRun.from_dict(lq.to_dict()).final_policy.same_as(lq.final_policy)
    assert isinstance(lq.policy(0), Policy)

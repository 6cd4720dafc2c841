import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from picertify.errors import AdmissibilityError, DivergentCostError, DomainError, ShapeError
from picertify.pi import evaluate_policy
from picertify.system import (FiniteProblem, LQProblem, build_lq_example, build_nonholonomic_example, build_toy3,
                              discounted_cost, is_detectable, is_stabilizable, load_problem, random_finite_problem,
                              rollout, save_problem)


def test_finite_validation():
    with pytest.raises(ShapeError):
        FiniteProblem(np.zeros((2, 2), int), np.zeros((2, 3)), np.zeros(2), 0.5)
    with pytest.raises(ShapeError):
        FiniteProblem(np.array([[0, 5], [0, 0]]), np.zeros((2, 2)), np.zeros(2), 0.5)
    with pytest.raises(DomainError):
        FiniteProblem(np.zeros((2, 1), int), -np.ones((2, 1)), np.zeros(2), 0.5)
    with pytest.raises(DomainError):
        FiniteProblem(np.zeros((2, 1), int), np.ones((2, 1)), np.zeros(2), 1.0)
    with pytest.raises(AdmissibilityError):
        FiniteProblem(np.zeros((2, 2), int), np.ones((2, 2)), np.zeros(2), 0.5,
                      admissible=np.array([[1, 0], [0, 0]], bool))
    with pytest.raises(DomainError):
        FiniteProblem(np.zeros((2, 1), int), np.ones((2, 1)), np.ones(2), 0.5, attractor=(0,))


def test_finite_problem_does_not_freeze_caller_arrays():
    succ = np.zeros((2, 1), int)
    FiniteProblem(succ, np.ones((2, 1)), np.zeros(2), 0.5)
    succ[0, 0] = 1


def test_inadmissible_action_rejected():
    p = FiniteProblem(np.zeros((2, 2), int), np.ones((2, 2)), np.zeros(2), 0.5,
                      admissible=np.array([[1, 0], [1, 1]], bool))
    with pytest.raises(AdmissibilityError):
        p.step(0, 1)
    assert list(p.actions(0)) == [0]


def test_lq_validation_and_feasibility():
    with pytest.raises(ShapeError):
        LQProblem(np.eye(2), np.ones((2, 1)), np.eye(3), np.eye(1), 0.5)
    with pytest.raises(DomainError):
        LQProblem(np.eye(1), np.ones((1, 1)), np.eye(1), np.zeros((1, 1)), 0.5)
    with pytest.raises(DomainError):
        LQProblem(np.diag([2.0, 0.5]), np.array([[0.0], [1.0]]), np.eye(2), np.eye(1), 0.5)
    p = build_lq_example()
    assert p.initial_feasible
    assert not p.with_gamma(0.3).initial_feasible


def test_stabilizable_detectable_helpers():
    A = np.diag([2.0, 0.5])
    assert is_stabilizable(A, np.array([[1.0], [0.0]]))
    assert not is_stabilizable(A, np.array([[0.0], [1.0]]))
    assert is_detectable(A, np.array([[1.0, 0.0]]))
    assert not is_detectable(A, np.array([[0.0, 1.0]]))


def test_toy3_rollout_and_cost():
    p = build_toy3()
    tr = rollout(p, np.array([0, 1, 0]), 2, 3)
    assert tr.states == [2, 1, 0, 0]
    assert tr.costs == [2.0, 1.0, 0.0]
    assert discounted_cost(p, np.array([0, 1, 0]), 2) == pytest.approx(2.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 0.99))
def test_cycle_closed_form_matches_linear_solve(seed, gamma):
    p, _ = random_finite_problem(12, 3, seed, gamma)
    h = np.random.default_rng(seed).integers(0, 3, 12)
    V = evaluate_policy(p, h).table
    for x in range(12):
        assert discounted_cost(p, h, x) == pytest.approx(V[x], rel=1e-9, abs=1e-9)


def test_lq_discounted_cost_matches_closed_form_and_detects_divergence():
    p = build_lq_example(K0=np.array([[-1.5]]), gamma=0.9)
    V = evaluate_policy(p, p.K0)
    x = np.array([0.7])
    assert discounted_cost(p, p.K0, x) == pytest.approx(V(x), rel=1e-9)
    with pytest.raises(DivergentCostError):
        discounted_cost(build_lq_example(gamma=0.5), np.array([[0.0]]), np.array([1.0]), max_steps=5000)


def test_random_problem_detectability_by_construction():
    p, W = random_finite_problem(40, 4, 3)
    lhs = W[p.successor] - W[:, None]
    rhs = -p.sigma[:, None] + p.stage_cost
    assert np.all(lhs <= rhs + 1e-12)
    assert np.all(W <= p.sigma / 2 + 1e-12)


def test_grid_projection_ties_round_down():
    g = build_nonholonomic_example(points_per_axis=5)
    h = g.spacing[0]
    X = np.array([[-2 + 0.5 * h, -2.0, -2.0], [-2 + 0.51 * h, -2.0, -2.0], [2.1, 0, 0]])
    idx = g.node_index(X)
    assert idx[0] == 0
    assert idx[1] == 25
    assert idx[2] == -1


def test_grid_compilation_sink_and_delta(nonholonomic_grid):
    g = nonholonomic_grid
    fin = g.finite
    assert fin.n_states == g.n_nodes + 1
    assert g.delta_grid == pytest.approx(4.0)
    assert np.all(fin.successor[g.sink] == g.sink)
    assert fin.sigma[g.sink] == g.delta_grid
    assert g.max_displacement <= math.sqrt(3) * g.spacing[0] / 2 + 1e-12


def test_json_roundtrip(tmp_path):
    for p in (build_toy3(), build_lq_example(), random_finite_problem(10, 2, 1)[0]):
        path = tmp_path / "p.json"
        save_problem(p, path)
        q, extras = load_problem(path)
        assert q.to_dict() == p.to_dict()
        assert extras == {}

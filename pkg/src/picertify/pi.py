"""Policy iteration, its LQ specialisation, and value-iteration oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AdmissibilityError, EvaluationDivergesError, InfeasibleInitialPolicyError
from .system import FiniteProblem, GridProblem, LQProblem, spectral_radius

RESIDUAL_TOL = 1e-10
LYAP_TOL = 1e-12
LYAP_MAX_DOUBLINGS = 64


@dataclass(frozen=True, eq=False)
class ValueFn:
    table: np.ndarray | None = None
    P: np.ndarray | None = None

    @property
    def backend(self) -> str:
        return "finite" if self.table is not None else "lq"

    def __call__(self, x) -> float:
        if self.table is not None:
            return float(self.table[x])
        x = np.asarray(x, float)
        return float(x @ self.P @ x)

    def to_dict(self) -> dict:
        return {"table": self.table.tolist()} if self.table is not None else {"P": self.P.tolist()}

    @classmethod
    def from_dict(cls, d):
        if "table" in d:
            return cls(table=np.asarray(d["table"], float))
        return cls(P=np.asarray(d["P"], float))


@dataclass(frozen=True, eq=False)
class Policy:
    table: np.ndarray | None = None
    K: np.ndarray | None = None

    @property
    def backend(self) -> str:
        return "finite" if self.table is not None else "lq"

    def __call__(self, x):
        if self.table is not None:
            return int(self.table[x])
        return self.K @ np.asarray(x, float)

    def same_as(self, other: "Policy") -> bool:
        if self.table is not None:
            return other.table is not None and np.array_equal(self.table, other.table)
        return other.K is not None and np.array_equal(self.K, other.K)

    def to_dict(self) -> dict:
        return {"table": self.table.tolist()} if self.table is not None else {"K": self.K.tolist()}

    @classmethod
    def from_dict(cls, d):
        if "table" in d:
            return cls(table=np.asarray(d["table"], np.int64))
        return cls(K=np.atleast_2d(np.asarray(d["K"], float)))


def as_policy(h) -> Policy:
    if isinstance(h, Policy):
        return h
    h = np.asarray(h)
    if h.ndim == 1 and np.issubdtype(h.dtype, np.integer):
        return Policy(table=h.astype(np.int64))
    return Policy(K=np.atleast_2d(h.astype(float)))


def _finite(problem) -> FiniteProblem:
    return problem.finite if isinstance(problem, GridProblem) else problem


def initial_policy(problem) -> Policy:
    """K0 on LQ problems, the first admissible action on finite ones, and the
    nearest-action projection of the reference (x1/15, -x2) feedback on the grid."""
    if isinstance(problem, LQProblem):
        return Policy(K=problem.K0.copy())
    if isinstance(problem, GridProblem) and problem.name == "nonholonomic":
        from .system import nonholonomic_initial_policy
        return Policy(table=grid_policy_from_feedback(problem, nonholonomic_initial_policy))
    return Policy(table=_finite(problem).default_policy().astype(np.int64))


def grid_policy_from_feedback(problem: GridProblem, h) -> np.ndarray:
    """Nearest admissible action to a continuous feedback ``h`` at every node."""
    U = np.asarray(h(problem.nodes), float)
    d = ((U[:, None, :] - problem.action_set[None, :, :]) ** 2).sum(axis=2)
    return np.append(np.argmin(d, axis=1), 0).astype(np.int64)


# -- evaluation -----------------------------------------------------------

def _lyapunov_doubling(Acl_scaled, S, tol=LYAP_TOL):
    """Sum_k (A^k)' S A^k by the doubling form of the fixed-point iteration
    P <- S + A'PA; each pass squares the step."""
    P = S.copy()
    Ak = Acl_scaled.copy()
    for _ in range(LYAP_MAX_DOUBLINGS):
        inc = Ak.T @ P @ Ak
        P = P + inc
        Ak = Ak @ Ak
        if np.linalg.norm(inc, 2) <= tol * max(1.0, np.linalg.norm(P, 2)):
            break
    return 0.5 * (P + P.T)


def evaluate_policy(problem, policy) -> ValueFn:
    policy = as_policy(policy)
    if isinstance(problem, LQProblem):
        Acl = problem.A + problem.B @ policy.K
        rate = math.sqrt(problem.gamma) * spectral_radius(Acl)
        if rate >= 1.0:
            raise EvaluationDivergesError(
                f"sqrt(gamma)*rho(A+BK) = {rate:.6g} >= 1: the policy cost is infinite", rate=rate)
        S = problem.Q + policy.K.T @ problem.R @ policy.K
        return ValueFn(P=_lyapunov_doubling(math.sqrt(problem.gamma) * Acl, S))
    fin = _finite(problem)
    h = policy.table
    x = np.arange(fin.n_states)
    if not fin.admissible[x, h].all():
        bad = int(np.flatnonzero(~fin.admissible[x, h])[0])
        raise AdmissibilityError(f"policy picks inadmissible action {h[bad]} at state {bad}")
    succ = fin.successor[x, h]
    T = sp.csc_matrix((np.ones(fin.n_states), (x, succ)), shape=(fin.n_states,) * 2)
    lhs = sp.identity(fin.n_states, format="csc") - fin.gamma * T
    V = spla.spsolve(lhs, fin.stage_cost[x, h])
    return ValueFn(table=np.asarray(V, float))


def q_values(problem, value: ValueFn) -> np.ndarray:
    fin = _finite(problem)
    q = fin.stage_cost + fin.gamma * value.table[fin.successor]
    return np.where(fin.admissible, q, np.inf)


def riccati_map(problem: LQProblem, P):
    A, B, Q, R, g = problem.A, problem.B, problem.Q, problem.R, problem.gamma
    G = R + g * B.T @ P @ B
    out = Q + g * A.T @ P @ A - g * g * A.T @ P @ B @ np.linalg.solve(G, B.T @ P @ A)
    return 0.5 * (out + out.T)


def bellman_residual(problem, value: ValueFn) -> float:
    """Sup-norm residual of the Bellman equation; spectral norm of P - Ric(P) on LQ."""
    if isinstance(problem, LQProblem):
        return float(np.linalg.norm(value.P - riccati_map(problem, value.P), 2))
    return float(np.max(np.abs(value.table - q_values(problem, value).min(axis=1))))


def improve_policy(problem, value: ValueFn) -> Policy:
    """Greedy policy; lowest action index on ties (finite), gain formula (LQ)."""
    if isinstance(problem, LQProblem):
        A, B, R, g, P = problem.A, problem.B, problem.R, problem.gamma, value.P
        K = -g * np.linalg.solve(R + g * B.T @ P @ B, B.T @ P @ A)
        return Policy(K=K)
    return Policy(table=np.argmin(q_values(problem, value), axis=1).astype(np.int64))


def optimal_closed_loop(problem, v_star: ValueFn) -> Policy:
    return improve_policy(problem, v_star)


# -- the algorithm --------------------------------------------------------

@dataclass
class PIRun:
    iterates: list
    bellman_residuals: list
    converged_at: int | None
    gamma: float
    stop_reason: str = ""
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iterates)

    def policy(self, i: int) -> Policy:
        """h^i; past the last stored iterate PI is stationary."""
        return self.iterates[min(i, len(self.iterates) - 1)][0]

    def value(self, i: int) -> ValueFn:
        return self.iterates[min(i, len(self.iterates) - 1)][1]

    @property
    def final_policy(self) -> Policy:
        return self.iterates[-1][0]

    @property
    def final_value(self) -> ValueFn:
        return self.iterates[-1][1]

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "converged_at": self.converged_at, "stop_reason": self.stop_reason,
                "bellman_residuals": list(self.bellman_residuals),
                "iterates": [{"i": i, "policy": h.to_dict(), "value": v.to_dict()}
                             for i, (h, v) in enumerate(self.iterates)]}

    @classmethod
    def from_dict(cls, d) -> "PIRun":
        its = [(Policy.from_dict(e["policy"]), ValueFn.from_dict(e["value"])) for e in d["iterates"]]
        return cls(its, list(d["bellman_residuals"]), d.get("converged_at"), float(d["gamma"]),
                   d.get("stop_reason", ""))


def run_pi(problem, h0=None, max_iters: int | None = None, residual_tol: float = RESIDUAL_TOL) -> PIRun:
    """Policy iteration from ``h0``.

    Stops when the Bellman residual of the current value is below
    ``residual_tol``, when the greedy policy repeats (finite backends), or
    after ``max_iters`` improvements.
    """
    h = initial_policy(problem) if h0 is None else as_policy(h0)
    if max_iters is None:
        max_iters = 10 * _finite(problem).n_states if h.table is not None else 1000
    try:
        V = evaluate_policy(problem, h)
    except EvaluationDivergesError as e:
        raise InfeasibleInitialPolicyError(
            f"initial policy has infinite discounted cost ({e}); lower gamma below 1/rho^2", rate=e.rate) from e
    if V.table is not None and not np.all(np.isfinite(V.table)):
        raise InfeasibleInitialPolicyError("initial policy evaluation is not finite")
    iterates = [(h, V)]
    residuals = [bellman_residual(problem, V)]
    converged, reason = None, "max_iters"
    for i in range(max_iters):
        if residuals[-1] <= residual_tol:
            converged, reason = i, "residual"
            break
        h_new = improve_policy(problem, V)
        if h_new.same_as(h):
            converged, reason = i, "policy_repeat"
            break
        h, V = h_new, evaluate_policy(problem, h_new)
        iterates.append((h, V))
        residuals.append(bellman_residual(problem, V))
    else:
        if residuals[-1] <= residual_tol:
            converged, reason = len(iterates) - 1, "residual"
    return PIRun(iterates, residuals, converged, problem.gamma, reason)


# -- oracles --------------------------------------------------------------

def value_iteration_oracle(problem, sup_tol: float = 1e-10, max_iters: int = 10_000_000) -> ValueFn:
    """Bellman-operator iteration from V = 0, stopped once ``|V - V*| <= sup_tol``
    is guaranteed by the gamma-contraction bound. LQ problems iterate the Riccati map."""
    if isinstance(problem, LQProblem):
        return ValueFn(P=riccati_value_iteration(problem))
    fin = _finite(problem)
    g = fin.gamma
    stop = sup_tol * (1.0 - g) / g
    cost = np.where(fin.admissible, fin.stage_cost, np.inf)
    V = np.zeros(fin.n_states)
    for _ in range(max_iters):
        Vn = (cost + g * V[fin.successor]).min(axis=1)
        d = float(np.max(np.abs(Vn - V)))
        V = Vn
        if d <= stop:
            break
    return ValueFn(table=V)


def riccati_value_iteration(problem: LQProblem, tol: float = 1e-14, max_iters: int = 10_000_000):
    """Iterate the discounted Riccati map from P = 0 until successive iterates agree to ``tol`` (relative)."""
    P = np.zeros_like(problem.Q)
    for _ in range(max_iters):
        Pn = riccati_map(problem, P)
        if np.linalg.norm(Pn - P, 2) <= tol * max(1.0, np.linalg.norm(Pn, 2)):
            return Pn
        P = Pn
    return P

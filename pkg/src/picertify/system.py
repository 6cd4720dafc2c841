"""Deterministic discrete-time control problems over three backends.

* :class:`FiniteProblem`: exact tables ``successor[x, u]``, ``stage_cost[x, u]``.
* :class:`LQProblem`: ``x+ = Ax + Bu`` with quadratic cost and ``sigma = |x|^2``.
* :class:`GridProblem`: continuous dynamics restricted to a finite action
  set and projected onto a uniform grid; it compiles to a FiniteProblem with
  one extra absorbing sink node for grid escapes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AdmissibilityError, DivergentCostError, DomainError, ShapeError

TAIL_TOL = 1e-12


# -- finite backend ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FiniteProblem:
    successor: np.ndarray
    stage_cost: np.ndarray
    sigma: np.ndarray
    gamma: float
    admissible: np.ndarray | None = None
    attractor: tuple = ()

    backend = "finite"

    def __post_init__(self):
        succ = np.asarray(self.successor, dtype=np.int64)
        cost = np.asarray(self.stage_cost, dtype=float)
        sig = np.array(self.sigma, dtype=float)
        if succ.ndim != 2 or cost.shape != succ.shape or sig.shape != (succ.shape[0],):
            raise ShapeError("successor/stage_cost must be (n, m) and sigma (n,)")
        n, m = succ.shape
        adm = np.ones((n, m), bool) if self.admissible is None else np.asarray(self.admissible, bool)
        if adm.shape != (n, m):
            raise ShapeError("admissible mask must be (n, m)")
        if not adm.any(axis=1).all():
            raise AdmissibilityError("every state needs a non-empty admissible action set")
        if np.any(((succ < 0) | (succ >= n)) & adm):
            raise ShapeError("successor index out of range")
        if np.any(cost[adm] < 0) or np.any(~np.isfinite(cost[adm])):
            raise DomainError("stage cost must be finite and non-negative")
        if np.any(sig < 0):
            raise DomainError("sigma must be non-negative")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        att = tuple(int(a) for a in self.attractor)
        if any(sig[a] != 0 for a in att):
            raise DomainError("sigma must vanish on the attractor")
        object.__setattr__(self, "successor", np.where(adm, succ, 0))
        object.__setattr__(self, "stage_cost", np.where(adm, cost, 0.0))
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "admissible", adm)
        object.__setattr__(self, "attractor", att)
        for arr in (self.successor, self.stage_cost, self.sigma, self.admissible):
            arr.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.successor.shape[0]

    @property
    def n_actions(self) -> int:
        return self.successor.shape[1]

    def actions(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.admissible[x])

    def check_action(self, x, u):
        if not (0 <= u < self.n_actions) or not self.admissible[x, u]:
            raise AdmissibilityError(f"action {u} is not admissible at state {x}")

    def step(self, x: int, u: int) -> int:
        self.check_action(x, u)
        return int(self.successor[x, u])

    def cost(self, x: int, u: int) -> float:
        self.check_action(x, u)
        return float(self.stage_cost[x, u])

    def measure(self, x) -> float:
        return float(self.sigma[x])

    def with_gamma(self, gamma: float) -> "FiniteProblem":
        return FiniteProblem(self.successor, self.stage_cost, self.sigma, gamma, self.admissible, self.attractor)

    def default_policy(self) -> np.ndarray:
        return np.argmax(self.admissible, axis=1)

    def to_dict(self) -> dict:
        d = {"backend": "finite", "gamma": self.gamma,
             "successor": self.successor.tolist(), "stage_cost": self.stage_cost.tolist(),
             "sigma": self.sigma.tolist(), "attractor": list(self.attractor)}
        if not self.admissible.all():
            d["admissible"] = self.admissible.astype(int).tolist()
        return d


# -- linear-quadratic backend ---------------------------------------------

def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


def is_schur(M) -> bool:
    return spectral_radius(M) < 1.0


def _pbh_ok(A, B, tol=1e-9) -> bool:
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol:
            M = np.hstack([lam * np.eye(n) - A, B])
            if np.linalg.matrix_rank(M, tol=1e-8) < n:
                return False
    return True


def is_stabilizable(A, B) -> bool:
    return _pbh_ok(np.atleast_2d(A), np.atleast_2d(B))


def is_detectable(A, C) -> bool:
    A = np.atleast_2d(A)
    return _pbh_ok(A.T, np.atleast_2d(C).T)


def _sqrt_psd(Q):
    w, V = np.linalg.eigh(Q)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


@dataclass(frozen=True, eq=False)
class LQProblem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    K0: np.ndarray | None = None

    backend = "lq"

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, float))
        B = np.array(self.B, float).reshape(A.shape[0], -1)
        Q = np.atleast_2d(np.array(self.Q, float))
        R = np.atleast_2d(np.array(self.R, float))
        n, m = B.shape
        if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
            raise ShapeError("inconsistent LQ dimensions")
        K0 = np.zeros((m, n)) if self.K0 is None else np.array(self.K0, float).reshape(m, n)
        if not np.allclose(Q, Q.T, atol=1e-12) or np.linalg.eigvalsh(Q).min() < -1e-12:
            raise DomainError("Q must be symmetric positive semidefinite")
        if not np.allclose(R, R.T, atol=1e-12) or np.linalg.eigvalsh(R).min() <= 0:
            raise DomainError("R must be symmetric positive definite")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not is_stabilizable(A, B):
            raise DomainError("(A, B) is not stabilizable")
        if not is_detectable(A, _sqrt_psd(Q)):
            raise DomainError("(A, C) is not detectable with Q = C'C")
        for name, val in (("A", A), ("B", B), ("Q", Q), ("R", R), ("K0", K0)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def initial_feasible(self) -> bool:
        """Whether sqrt(gamma)(A + B K0) is Schur, i.e. the initial cost is finite."""
        return math.sqrt(self.gamma) * spectral_radius(self.A + self.B @ self.K0) < 1.0

    def step(self, x, u):
        return self.A @ np.asarray(x, float).reshape(self.n) + self.B @ np.asarray(u, float).reshape(self.m)

    def cost(self, x, u) -> float:
        x = np.asarray(x, float).reshape(self.n)
        u = np.asarray(u, float).reshape(self.m)
        return float(x @ self.Q @ x + u @ self.R @ u)

    def measure(self, x) -> float:
        x = np.asarray(x, float).reshape(self.n)
        return float(x @ x)

    def with_gamma(self, gamma: float) -> "LQProblem":
        return LQProblem(self.A, self.B, self.Q, self.R, gamma, self.K0)

    def to_dict(self) -> dict:
        return {"backend": "lq", "gamma": self.gamma, "A": self.A.tolist(), "B": self.B.tolist(),
                "Q": self.Q.tolist(), "R": self.R.tolist(), "K0": self.K0.tolist()}


# -- gridded continuous backend -------------------------------------------

@dataclass(frozen=True, eq=False)
class GridProblem:
    """Continuous-state problem restricted to a uniform grid and a finite action set.

    ``dynamics(X, u)``, ``cost_fn(X, u)`` and ``sigma_fn(X)`` take a batch of
    states ``X`` of shape (N, d) and one input vector ``u``.
    """

    bounds: np.ndarray
    points_per_axis: int
    action_set: np.ndarray
    dynamics: Callable
    cost_fn: Callable
    sigma_fn: Callable
    gamma: float
    projection: str = "nearest"
    name: str = "grid"
    params: dict = field(default_factory=dict)

    backend = "grid"

    def __post_init__(self):
        b = np.asarray(self.bounds, float)
        if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
            raise ShapeError("bounds must be (d, 2) with lo < hi")
        if self.points_per_axis < 2:
            raise DomainError("need at least 2 points per axis")
        if self.projection not in ("nearest", "none"):
            raise DomainError(f"unknown projection {self.projection!r}")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma}")
        acts = np.atleast_2d(np.asarray(self.action_set, float))
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "action_set", acts)
        object.__setattr__(self, "_cache", {})

    @property
    def dimension(self) -> int:
        return self.bounds.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return (self.bounds[:, 1] - self.bounds[:, 0]) / (self.points_per_axis - 1)

    @property
    def n_nodes(self) -> int:
        return self.points_per_axis ** self.dimension

    @property
    def sink(self) -> int:
        return self.n_nodes

    @property
    def nodes(self) -> np.ndarray:
        if "nodes" not in self._cache:
            axes = [np.linspace(lo, hi, self.points_per_axis) for lo, hi in self.bounds]
            mesh = np.meshgrid(*axes, indexing="ij")
            self._cache["nodes"] = np.stack([m.ravel() for m in mesh], axis=1)
        return self._cache["nodes"]

    def node_index(self, X) -> np.ndarray:
        """Nearest node in spacing-normalised coordinates; -1 outside the box.

        Rounding half-down gives the lowest-index node on exact ties.
        """
        X = np.atleast_2d(np.asarray(X, float))
        lo, h, p = self.bounds[:, 0], self.spacing, self.points_per_axis
        z = (X - lo) / h
        idx = np.ceil(z - 0.5).astype(np.int64)
        eps = 1e-9
        outside = np.any((z < -eps) | (z > p - 1 + eps), axis=1)
        idx = np.clip(idx, 0, p - 1)
        flat = np.zeros(len(X), np.int64)
        for j in range(self.dimension):
            flat = flat * p + idx[:, j]
        flat[outside] = -1
        return flat

    @property
    def delta_grid(self) -> float:
        """Largest level Delta such that {sigma <= Delta} is contained in the grid box."""
        if "delta" not in self._cache:
            nodes = self.nodes
            on_face = np.any(np.isclose(nodes, self.bounds[:, 0]) | np.isclose(nodes, self.bounds[:, 1]), axis=1)
            self._cache["delta"] = float(np.min(self.sigma_fn(nodes[on_face])))
        return self._cache["delta"]

    def _compile(self):
        nodes = self.nodes
        N, M = len(nodes), len(self.action_set)
        succ = np.empty((N + 1, M), np.int64)
        cost = np.empty((N + 1, M))
        disp = np.zeros((N + 1, M))
        for a, u in enumerate(self.action_set):
            Xn = self.dynamics(nodes, u)
            idx = self.node_index(Xn)
            inside = idx >= 0
            snapped = nodes[np.where(inside, idx, 0)]
            d = np.linalg.norm(Xn - snapped, axis=1)
            if self.projection == "none" and np.any(inside & (d > 1e-9)):
                raise DomainError("dynamics leave the grid lattice and projection is disabled")
            succ[:N, a] = np.where(inside, idx, N)
            disp[:N, a] = np.where(inside, d, 0.0)
            cost[:N, a] = self.cost_fn(nodes, u)
        lmax = float(cost[:N].max())
        succ[N, :] = N
        cost[N, :] = lmax
        sig = np.append(self.sigma_fn(nodes), self.delta_grid)
        zero = tuple(int(i) for i in np.flatnonzero(sig == 0.0))
        fin = FiniteProblem(succ, cost, sig, self.gamma, attractor=zero)
        self._cache["finite"] = fin
        self._cache["displacement"] = disp
        self._cache["lmax"] = lmax

    @property
    def finite(self) -> FiniteProblem:
        if "finite" not in self._cache:
            self._compile()
        return self._cache["finite"]

    @property
    def displacement(self) -> np.ndarray:
        """Euclidean projection displacement per (node, action)."""
        if "displacement" not in self._cache:
            self._compile()
        return self._cache["displacement"]

    @property
    def max_displacement(self) -> float:
        return float(self.displacement.max())

    def action_index(self, u) -> int:
        u = np.asarray(u, float).ravel()
        hit = np.flatnonzero(np.all(np.isclose(self.action_set, u, atol=1e-12), axis=1))
        if hit.size == 0:
            raise AdmissibilityError(f"input {u} is not in the action set")
        return int(hit[0])

    def step(self, x, u):
        """Projected successor of a continuous state; None marks the sink."""
        a = self.action_index(u)
        Xn = self.dynamics(np.atleast_2d(np.asarray(x, float)), self.action_set[a])
        idx = int(self.node_index(Xn)[0])
        if idx < 0:
            return None
        if self.projection == "none" and np.linalg.norm(Xn[0] - self.nodes[idx]) > 1e-9:
            raise DomainError("successor is off the lattice and projection is disabled")
        return self.nodes[idx].copy()

    def continuous_step(self, x, u):
        return self.dynamics(np.atleast_2d(np.asarray(x, float)), np.asarray(u, float))[0]

    def cost(self, x, u) -> float:
        return float(self.cost_fn(np.atleast_2d(np.asarray(x, float)), np.asarray(u, float))[0])

    def measure(self, x) -> float:
        return float(self.sigma_fn(np.atleast_2d(np.asarray(x, float)))[0])

    def with_gamma(self, gamma: float) -> "GridProblem":
        g = GridProblem(self.bounds, self.points_per_axis, self.action_set, self.dynamics, self.cost_fn,
                        self.sigma_fn, gamma, self.projection, self.name, dict(self.params, gamma=gamma))
        if "finite" in self._cache:
            c = self._cache
            g._cache.update(nodes=c["nodes"], delta=c.get("delta", self.delta_grid),
                            displacement=c["displacement"], lmax=c["lmax"],
                            finite=c["finite"].with_gamma(gamma))
        return g

    def to_dict(self) -> dict:
        if self.name != "nonholonomic":
            raise ValueError("only the built-in nonholonomic grid problem is serialisable")
        return {"backend": "grid", "example": "nonholonomic", "gamma": self.gamma,
                "grid": {"bound": float(self.bounds[0, 1]), "points_per_axis": self.points_per_axis,
                         "actions_per_axis": self.params.get("actions_per_axis", 9),
                         "action_bound": self.params.get("action_bound", 1.0)}}


# -- examples -------------------------------------------------------------

NONHOLONOMIC = {
    "alpha_W": Fraction(1),
    "alpha_W_bar": Fraction(0),
    "alpha_Vstar_bar": Fraction(22, 5),
    "M": Fraction(22, 3),
    "a": Fraction(256, 225),
}


def nonholonomic_dynamics(X, u):
    X = np.atleast_2d(X)
    u1, u2 = float(u[0]), float(u[1])
    out = np.empty_like(X, dtype=float)
    out[:, 0] = X[:, 0] + u1
    out[:, 1] = X[:, 1] + u2
    out[:, 2] = X[:, 2] + X[:, 0] * u2 - X[:, 1] * u1
    return out


def nonholonomic_sigma(X):
    X = np.atleast_2d(X)
    return X[:, 0] ** 2 + X[:, 1] ** 2 + 10.0 * np.abs(X[:, 2])


def nonholonomic_cost(X, u):
    return nonholonomic_sigma(X) + float(np.dot(u, u))


def nonholonomic_initial_policy(x):
    """The exponentially growing but finite-cost initial feedback (x1/15, -x2)."""
    x = np.asarray(x, float)
    return np.array([x[..., 0] / 15.0, -x[..., 1]]).T


def build_nonholonomic_example(gamma: float = 0.86, bound: float = 2.0, points_per_axis: int = 41,
                               actions_per_axis: int = 9, action_bound: float = 1.0,
                               projection: str = "nearest") -> GridProblem:
    ax = np.linspace(-action_bound, action_bound, actions_per_axis)
    acts = np.array([(a, b) for a in ax for b in ax])
    return GridProblem(np.array([[-bound, bound]] * 3), points_per_axis, acts, nonholonomic_dynamics,
                       nonholonomic_cost, nonholonomic_sigma, gamma, projection, "nonholonomic",
                       {"bound": bound, "points_per_axis": points_per_axis,
                        "actions_per_axis": actions_per_axis, "action_bound": action_bound})


def build_lq_example(K0=None, gamma: float = 0.2, A=None, B=None, Q=None, R=None) -> LQProblem:
    """Defaults to the scalar unstable plant A=2, B=1, Q=R=1 started from K0=0."""
    A = np.array([[2.0]]) if A is None else np.atleast_2d(A)
    n = A.shape[0]
    B = np.ones((n, 1)) if B is None else np.asarray(B, float).reshape(n, -1)
    m = B.shape[1]
    Q = np.eye(n) if Q is None else Q
    R = np.eye(m) if R is None else R
    K0 = np.zeros((m, n)) if K0 is None else K0
    return LQProblem(A, B, Q, R, gamma, K0)


def build_lq2_example(gamma: float = 0.6) -> LQProblem:
    """Two-state plant with one unstable mode, Q = R = I and a non-stabilising K0 = 0."""
    A = np.array([[1.1, 0.2], [0.0, 0.9]])
    return LQProblem(A, np.eye(2), np.eye(2), np.eye(2), gamma, np.zeros((2, 2)))


def build_toy3(gamma: float = 0.5) -> FiniteProblem:
    """Three states, state 0 absorbing. Optimal value is (0, 1, 2.5) at gamma=0.5."""
    succ = [[0, 0], [1, 0], [1, 0]]
    cost = [[0.0, 0.0], [2.0, 1.0], [2.0, 5.0]]
    return FiniteProblem(np.array(succ), np.array(cost), np.array([0.0, 1.0, 2.0]), gamma, attractor=(0,))


def random_finite_problem(n_states: int = 50, n_actions: int = 5, seed: int = 0, gamma: float = 0.95,
                          with_W: bool = True):
    """Random finite problem with a certified structure.

    State 0 is an absorbing attractor with zero cost. Every other state has a
    "descent" action (action 0) to a state of at most half its index, and
    ``sigma(x) = x``. A random storage function ``W <= sigma/2`` is drawn and
    the stage cost is built so that ``W(f(x,u)) - W(x) <= -sigma(x) + l(x,u)``
    holds by construction, i.e. detectability with ``alpha_W = I``.

    Returns ``(problem, W)``.
    """
    rng = np.random.default_rng(seed)
    n, m = n_states, n_actions
    x = np.arange(n)
    sigma = x.astype(float)
    succ = rng.integers(0, n, size=(n, m))
    succ[:, 0] = np.array([rng.integers(0, k // 2 + 1) if k > 0 else 0 for k in x])
    succ[0, :] = 0
    W = rng.uniform(0.0, 0.5, n) * sigma if with_W else np.zeros(n)
    extra = rng.uniform(0.0, 0.5, (n, m)) * sigma[:, None]
    cost = sigma[:, None] + np.maximum(0.0, W[succ] - W[:, None]) + extra
    cost[0, :] = 0.0
    return FiniteProblem(succ, cost, sigma, gamma, attractor=(0,)), W


def random_policy(problem, seed: int) -> np.ndarray:
    """A seeded admissible policy table, useful as a PI start with work left to do."""
    rng = np.random.default_rng(seed + 1000)
    out = np.empty(problem.n_states, np.int64)
    for x in range(problem.n_states):
        out[x] = rng.choice(problem.actions(x))
    return out


# -- trajectories ---------------------------------------------------------

@dataclass
class Trajectory:
    states: list
    costs: list
    escaped: bool = False
    escape_step: int | None = None

    @property
    def horizon(self) -> int:
        return len(self.states) - 1


def _policy_action(problem, policy, x):
    if isinstance(problem, LQProblem):
        K = policy if isinstance(policy, np.ndarray) else policy.K
        return K @ np.asarray(x, float)
    if callable(policy):
        return policy(x)
    table = policy if isinstance(policy, np.ndarray) else policy.table
    return int(table[x])


def rollout(problem, policy, x0, horizon: int) -> Trajectory:
    """Closed-loop solution ``phi(0..horizon)`` with per-step stage costs.

    Finite and grid problems take node indices and a policy table; LQ takes
    vectors and a gain. On a grid, entering the sink truncates the trajectory
    and sets ``escaped``.
    """
    if isinstance(problem, GridProblem):
        fin = problem.finite
        x = int(x0)
        states, costs = [x], []
        for k in range(horizon):
            u = _policy_action(fin, policy, x)
            costs.append(float(fin.stage_cost[x, u]))
            x = int(fin.successor[x, u])
            if x == problem.sink:
                return Trajectory(states, costs, True, k + 1)
            states.append(x)
        return Trajectory(states, costs)
    if isinstance(problem, FiniteProblem):
        x = int(x0)
        states, costs = [x], []
        for _ in range(horizon):
            u = _policy_action(problem, policy, x)
            costs.append(problem.cost(x, u))
            x = problem.step(x, u)
            states.append(x)
        return Trajectory(states, costs)
    x = np.asarray(x0, float)
    states, costs = [x], []
    for _ in range(horizon):
        u = _policy_action(problem, policy, x)
        costs.append(problem.cost(x, u))
        x = problem.step(x, u)
        states.append(x)
    return Trajectory(states, costs)


def discounted_cost(problem, policy, x0, tail_tol: float = TAIL_TOL, max_steps: int = 1_000_000,
                    window: int = 50) -> float:
    """Discounted cost of a stationary policy from ``x0``.

    Finite (and grid) backends use the exact transient-plus-cycle closed form.
    Continuous backends sum until the geometric tail bound drops below
    ``tail_tol``.
    """
    g = problem.gamma
    if isinstance(problem, (FiniteProblem, GridProblem)):
        fin = problem.finite if isinstance(problem, GridProblem) else problem
        seen = {}
        costs = []
        x = int(x0)
        while x not in seen:
            seen[x] = len(costs)
            u = _policy_action(fin, policy, x)
            costs.append(float(fin.stage_cost[x, u]))
            x = int(fin.successor[x, u])
        t = seen[x]
        c = np.asarray(costs)
        disc = g ** np.arange(len(c))
        transient = float(np.dot(disc[:t], c[:t]))
        cycle = float(np.dot(g ** np.arange(len(c) - t), c[t:]))
        L = len(c) - t
        return transient + g ** t * cycle / (1.0 - g ** L)
    x = np.asarray(x0, float)
    total, disc = 0.0, 1.0
    terms = []
    for k in range(max_steps):
        u = _policy_action(problem, policy, x)
        c = problem.cost(x, u)
        term = disc * c
        total += term
        terms.append(term)
        if k >= window:
            recent = max(terms[-window:])
            if terms[-1] > terms[-1 - window] * (1 + 1e-9) and terms[-1] > tail_tol:
                raise DivergentCostError(f"discounted stage cost is not decaying at step {k}")
            ratio = (terms[-1] / terms[-1 - window]) ** (1.0 / window) if terms[-1 - window] > 0 else 0.0
            if recent * (1.0 / (1.0 - max(ratio, g))) < tail_tol:
                return total
        x = problem.step(x, u)
        disc *= g
    raise DivergentCostError(f"tail bound not reached within {max_steps} steps")


# -- JSON -----------------------------------------------------------------

def problem_to_dict(problem) -> dict:
    return problem.to_dict()


def problem_from_dict(d: dict):
    backend = d.get("backend")
    if backend == "finite":
        return FiniteProblem(np.array(d["successor"]), np.array(d["stage_cost"], float),
                             np.array(d["sigma"], float), float(d["gamma"]),
                             None if "admissible" not in d else np.array(d["admissible"], bool),
                             tuple(d.get("attractor", ())))
    if backend == "lq":
        return LQProblem(np.array(d["A"], float), np.array(d["B"], float), np.array(d["Q"], float),
                         np.array(d["R"], float), float(d["gamma"]),
                         None if d.get("K0") is None else np.array(d["K0"], float))
    if backend == "grid":
        if d.get("example", "nonholonomic") != "nonholonomic":
            raise ValueError(f"unknown grid example {d.get('example')!r}")
        grid = d.get("grid", {})
        return build_nonholonomic_example(float(d["gamma"]), float(grid.get("bound", 2.0)),
                                          int(grid.get("points_per_axis", 41)),
                                          int(grid.get("actions_per_axis", 9)),
                                          float(grid.get("action_bound", 1.0)))
    raise ValueError(f"unknown backend {backend!r}")


def load_problem(path) -> tuple:
    """Read a problem file. Returns ``(problem, extras)`` where extras holds the
    optional ``initial_policy`` and ``certificate`` sections."""
    d = json.loads(Path(path).read_text())
    extras = {k: d[k] for k in ("initial_policy", "certificate") if k in d}
    return problem_from_dict(d), extras


def save_problem(problem, path, **extras) -> None:
    d = problem.to_dict()
    d.update(extras)
    Path(path).write_text(json.dumps(d, indent=1) + "\n")

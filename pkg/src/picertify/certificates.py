"""Machine-checkable standing assumptions and the constants derived from them.

Detectability (a storage function W with gains alpha_W, alpha_W_bar), the
initial-policy cost bound from an exponential stage-cost envelope, the
optimal-value bound alpha_Vstar_bar with the discount threshold gamma*, the
comparison functions of the Lyapunov construction, and the iteration
thresholds / exponential envelope constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.stats import qmc

from . import compfn as cf
from .compfn import ComparisonFn, KLBound
from .errors import (DiscountRangeError, FormulaDomainError, NoCertificateError, NoStabilizingDiscountError,
                     ShapeError)
from .pi import as_policy, initial_policy
from .report import CheckResult, jsonable
from .system import (NONHOLONOMIC, FiniteProblem, GridProblem, LQProblem, nonholonomic_initial_policy,
                     spectral_radius)

MARGIN_TOL = 1e-9
LMI_TOL = 1e-10
GAMMA_BISECT_TOL = 1e-10


# -- detectability ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DetectabilityCertificate:
    alpha_W: ComparisonFn
    alpha_W_bar: ComparisonFn
    W_table: np.ndarray | None = None
    S1: np.ndarray | None = None
    S2: np.ndarray | None = None
    W_fn: object = None

    def W(self, x) -> float:
        if self.W_table is not None:
            return float(self.W_table[x])
        if self.S2 is not None:
            x = np.asarray(x, float)
            return float(x @ self.S2 @ x)
        if self.W_fn is not None:
            return float(self.W_fn(x))
        return 0.0

    @property
    def is_zero(self) -> bool:
        if self.W_table is not None:
            return not np.any(self.W_table)
        if self.S2 is not None:
            return not np.any(self.S2)
        return self.W_fn is None

    @classmethod
    def zero(cls, alpha_W: ComparisonFn | None = None):
        return cls(alpha_W or cf.identity(), cf.zero())

    @classmethod
    def quadratic(cls, S1, S2):
        S1, S2 = np.atleast_2d(S1), np.atleast_2d(S2)
        return cls(cf.linear(float(np.linalg.eigvalsh(S1).min())),
                   cf.linear(max(0.0, float(np.linalg.eigvalsh(S2).max()))), S1=S1, S2=S2)

    @classmethod
    def lq_default(cls, problem: LQProblem):
        """S2 = 0, S1 = Q; valid whenever Q is positive definite."""
        if np.linalg.eigvalsh(problem.Q).min() <= 0:
            raise NoCertificateError("default S1 = Q needs Q positive definite; supply S1, S2")
        return cls.quadratic(problem.Q.copy(), np.zeros_like(problem.Q))

    @classmethod
    def finite_table(cls, problem: FiniteProblem, W=None):
        """Largest linear alpha_W and smallest linear alpha_W_bar valid for the table ``W``."""
        n = problem.n_states
        W = np.zeros(n) if W is None else np.asarray(W, float)
        pos = problem.sigma > 0
        if np.any(W[~pos] > 0):
            raise NoCertificateError("W must vanish where sigma does")
        slack = problem.stage_cost - W[problem.successor] + W[:, None]
        slack = np.where(problem.admissible, slack, np.inf)
        if np.any(slack[~pos].min(axis=1) < -MARGIN_TOL):
            raise NoCertificateError("W increases faster than the stage cost on the attractor")
        a_W = float(np.min(slack[pos].min(axis=1) / problem.sigma[pos])) if pos.any() else 1.0
        if a_W <= 0:
            raise NoCertificateError(f"no positive alpha_W gain exists for this W (best {a_W:.3g})")
        a_W_bar = float(np.max(W[pos] / problem.sigma[pos], initial=0.0))
        return cls(cf.linear(a_W), cf.linear(a_W_bar), W_table=W)

    def to_dict(self):
        d = {"alpha_W": self.alpha_W.to_dict(), "alpha_W_bar": self.alpha_W_bar.to_dict(), "W_zero": self.is_zero}
        if self.S1 is not None:
            d.update(S1=self.S1.tolist(), S2=self.S2.tolist())
        return d


def _probe_states_lq(problem: LQProblem, n: int, seed: int):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, problem.n)), rng.standard_normal((n, problem.m))


def verify_detectability(problem, cert: DetectabilityCertificate, n_probe: int = 1000,
                         seed: int = 0) -> list:
    """Worst margins of ``W <= alpha_W_bar(sigma)`` and of the one-step decrease
    ``W(f(x,u)) - W(x) <= -alpha_W(sigma(x)) + l(x,u)`` over a probe set."""
    if isinstance(problem, FiniteProblem):
        n, m = problem.successor.shape
        W = np.array([cert.W(x) for x in range(n)])
        bound = cert.alpha_W_bar(problem.sigma)
        m1 = bound - W
        lhs = W[problem.successor] - W[:, None]
        rhs = -cert.alpha_W(problem.sigma)[:, None] + problem.stage_cost
        m2 = np.where(problem.admissible, rhs - lhs, np.inf)
        j1 = int(np.argmin(m1))
        j2 = np.unravel_index(int(np.argmin(m2)), m2.shape)
        w1 = {"state": j1}
        w2 = {"state": int(j2[0]), "action": int(j2[1])}
        worst1, worst2, count = float(m1[j1]), float(m2[j2]), n * m
    elif isinstance(problem, LQProblem):
        X, U = _probe_states_lq(problem, n_probe, seed)
        sig = np.einsum("ij,ij->i", X, X)
        W = np.array([cert.W(x) for x in X])
        Xn = X @ problem.A.T + U @ problem.B.T
        Wn = np.array([cert.W(x) for x in Xn])
        ell = np.einsum("ij,jk,ik->i", X, problem.Q, X) + np.einsum("ij,jk,ik->i", U, problem.R, U)
        m1 = cert.alpha_W_bar(sig) - W
        m2 = -cert.alpha_W(sig) + ell - (Wn - W)
        j1, k2 = int(np.argmin(m1)), int(np.argmin(m2))
        w1 = {"x": X[j1]}
        w2 = {"x": X[k2], "u": U[k2]}
        worst1, worst2, count = float(m1[j1]), float(m2[k2]), n_probe
    elif isinstance(problem, GridProblem):
        nodes = problem.nodes
        sig = problem.sigma_fn(nodes)
        W = np.array([cert.W(x) for x in nodes]) if not cert.is_zero else np.zeros(len(nodes))
        m1 = cert.alpha_W_bar(sig) - W
        worst2, w2 = math.inf, None
        for u in problem.action_set:
            Xn = problem.dynamics(nodes, u)
            Wn = np.array([cert.W(x) for x in Xn]) if not cert.is_zero else np.zeros(len(nodes))
            mm = -cert.alpha_W(sig) + problem.cost_fn(nodes, u) - (Wn - W)
            k = int(np.argmin(mm))
            if mm[k] < worst2:
                worst2, w2 = float(mm[k]), {"x": nodes[k], "u": u}
        j1 = int(np.argmin(m1))
        w1 = {"x": nodes[j1]}
        worst1, count = float(m1[j1]), len(nodes) * len(problem.action_set)
    else:
        raise TypeError(type(problem))
    return [CheckResult("sa3-upper", worst1 >= -MARGIN_TOL, worst1, w1, count, MARGIN_TOL),
            CheckResult("sa3-decrease", worst2 >= -MARGIN_TOL, worst2, w2, count, MARGIN_TOL)]


@dataclass(frozen=True)
class LMIResult:
    passed: bool
    max_eig: float
    min_eig: float


def verify_lmi(A, B, Q, R, S1, S2, tol: float = LMI_TOL) -> LMIResult:
    """Negative semidefiniteness of the block matrix that certifies W(x) = x'S2x."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    Q, R, S1, S2 = (np.atleast_2d(np.asarray(M, float)) for M in (Q, R, S1, S2))
    n = A.shape[0]
    if B.shape[0] != n:
        B = B.reshape(n, -1)
    m = B.shape[1]
    for name, M, k in (("A", A, n), ("Q", Q, n), ("S1", S1, n), ("S2", S2, n), ("R", R, m)):
        if M.shape != (k, k):
            raise ShapeError(f"{name} has shape {M.shape}, expected {(k, k)}")
    top = np.hstack([A.T @ S2 @ A - S2 + S1 - Q, A.T @ S2 @ B])
    bot = np.hstack([B.T @ S2 @ A, B.T @ S2 @ B - R])
    blk = np.vstack([top, bot])
    eig = np.linalg.eigvalsh(0.5 * (blk + blk.T))
    return LMIResult(bool(eig.max() <= tol), float(eig.max()), float(eig.min()))


# -- initial policy ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InitialPolicyCertificate:
    M: float
    a: float
    chi: ComparisonFn = field(default_factory=cf.identity)
    source: str = "fitted"
    details: dict = field(default_factory=dict)

    @property
    def gamma0(self) -> float:
        return min(1.0, 1.0 / self.a)

    def check_gamma(self, gamma: float):
        if not 0.0 < gamma < self.gamma0:
            raise DiscountRangeError(f"gamma = {gamma} outside (0, gamma0 = {self.gamma0})")

    def a_V_bar(self, gamma: float) -> float:
        self.check_gamma(gamma)
        g = self.chi.gain
        if g is None:
            raise ValueError("chi is not a linear gain")
        return g * self.M / (1.0 - self.a * gamma)

    def alpha_V_bar(self, gamma: float) -> ComparisonFn:
        self.check_gamma(gamma)
        return cf.scaled(self.M / (1.0 - self.a * gamma), self.chi)

    def to_dict(self):
        return jsonable({"M": self.M, "a": self.a, "gamma0": self.gamma0, "chi": self.chi.to_dict(),
                         "source": self.source, **self.details})


def _stage_cost_ratios(problem, h0, horizon, n_samples, seed, chi):
    """Max over probed initial states of l(phi(k))/chi(sigma(x)), k = 0..horizon-1."""
    if isinstance(problem, FiniteProblem):
        h = as_policy(h0).table
        xs = np.arange(problem.n_states)
        sig0 = problem.sigma.copy()
        cur = xs.copy()
        rows = []
        for _ in range(horizon):
            u = h[cur]
            rows.append(problem.stage_cost[cur, u])
            cur = problem.successor[cur, u]
        costs = np.array(rows)
    else:
        if isinstance(problem, LQProblem):
            K = as_policy(h0).K
            X = np.random.default_rng(seed).standard_normal((n_samples, problem.n))
            sig0 = np.einsum("ij,ij->i", X, X)
            rows = []
            for _ in range(horizon):
                U = X @ K.T
                rows.append(np.einsum("ij,jk,ik->i", X, problem.Q, X) + np.einsum("ij,jk,ik->i", U, problem.R, U))
                X = X @ problem.A.T + U @ problem.B.T
            costs = np.array(rows)
        else:
            X = sample_sublevel(problem, n_samples, seed)
            sig0 = problem.sigma_fn(X)
            rows = []
            for _ in range(horizon):
                U = np.atleast_2d(h0(X))
                rows.append(np.array([problem.cost_fn(X[j:j + 1], U[j])[0] for j in range(len(X))]))
                X = np.stack([problem.dynamics(X[j:j + 1], U[j])[0] for j in range(len(X))])
            costs = np.array(rows)
    zero = sig0 <= 0
    if np.any(costs[:, zero] > 0):
        j = int(np.flatnonzero(zero & np.any(costs > 0, axis=0))[0])
        raise NoCertificateError(f"positive stage cost from a state with sigma = 0 (sample {j})")
    denom = np.asarray(chi(sig0[~zero]), float)
    return costs[:, ~zero] / denom[None, :]


def sample_sublevel(problem: GridProblem, n: int, seed: int, Delta: float | None = None):
    """``n`` scrambled Halton points of the grid box with 0 < sigma <= Delta (default Delta_grid)."""
    Delta = problem.delta_grid if Delta is None else Delta
    d = problem.dimension
    lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
    eng = qmc.Halton(d, scramble=True, seed=seed)
    out = []
    while len(out) < n:
        X = lo + (hi - lo) * eng.random(4 * n)
        keep = X[(problem.sigma_fn(X) <= Delta) & (problem.sigma_fn(X) > 0)]
        out.extend(keep.tolist())
    return np.asarray(out[:n])


def _tail_rate(g: np.ndarray) -> float:
    """Growth rate needed to reach the last probed values from anywhere in the second
    half of the window; raises when the per-step ratio is still accelerating at the end."""
    K = len(g) - 1
    if K < 1 or g[-1] <= 0:
        return 1.0
    a = max([(g[-1] / g[j]) ** (1.0 / (K - j)) for j in range(K // 2, K) if g[j] > 0], default=1.0)
    if K >= 8 and np.all(g[3 * K // 4 - 1:] > 0):
        logr = np.diff(np.log(g[3 * K // 4 - 1:]))
        if logr[-1] - logr[0] > 0.05 and logr[-1] > 0:
            raise NoCertificateError("stage costs grow faster than any exponential over the probe window")
    return float(max(a, 1e-12))


def lemma1_certificate(problem, h0=None, chi: ComparisonFn | None = None, rate: float | None = None,
                       declared: tuple | None = None, horizon: int | None = None, n_samples: int = 100,
                       seed: int = 0) -> InitialPolicyCertificate:
    """Exponential stage-cost envelope ``l(phi(k,x,h0)) <= M a^k chi(sigma(x))``.

    LQ problems use the closed form M = |Q + K0'RK0|, a = |A + BK0|^2. Other
    backends probe trajectories: with ``declared=(M, a)`` the constants are
    checked, otherwise M is the k=0 ratio and ``a`` the smallest rate that
    dominates every later ratio (or ``rate`` if given).
    """
    chi = chi or cf.identity()
    if isinstance(problem, LQProblem):
        K0 = problem.K0 if h0 is None else as_policy(h0).K
        M = float(np.linalg.norm(problem.Q + K0.T @ problem.R @ K0, 2))
        a = float(np.linalg.norm(problem.A + problem.B @ K0, 2) ** 2)
        rho = spectral_radius(problem.A + problem.B @ K0)
        return InitialPolicyCertificate(M, a, cf.identity(), "closed-form",
                                        {"initial_policy_stabilizing": bool(rho < 1.0), "rho_A_BK0": rho})
    if isinstance(problem, GridProblem):
        if h0 is None:
            h0 = nonholonomic_initial_policy
        if not callable(h0):
            raise TypeError("grid problems take the continuous feedback as h0")
        horizon = horizon or 60
    else:
        h0 = initial_policy(problem) if h0 is None else h0
        horizon = horizon or 2 * problem.n_states + 1
    ratios = _stage_cost_ratios(problem, h0, horizon, n_samples, seed, chi)
    g = ratios.max(axis=1) if ratios.size else np.zeros(horizon)
    ks = np.arange(horizon)
    details = {"probe_horizon": horizon, "probe_states": int(ratios.shape[1])}
    if declared is not None:
        M, a = float(declared[0]), float(declared[1])
        excess = ratios / (M * a ** ks[:, None])
        worst = float(excess.max(initial=0.0))
        if worst > 1 + MARGIN_TOL:
            k, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
            raise NoCertificateError(f"declared envelope violated at step {k} of probe {j} (ratio {worst:.6g})")
        details["worst_envelope_ratio"] = worst
        return InitialPolicyCertificate(M, a, chi, "declared", details)
    if rate is not None:
        a = float(rate)
    else:
        a = _tail_rate(g)
    M = float(max((g / a ** ks).max(initial=0.0), 1e-300))
    return InitialPolicyCertificate(M, a, chi, "fitted", details)


# -- optimal value bound and gamma* -------------------------------------------

def undiscounted_riccati(problem: LQProblem) -> np.ndarray:
    return sla.solve_discrete_are(problem.A, problem.B, problem.Q, problem.R)


def finite_value_bound(problem: FiniteProblem, max_iters: int | None = None) -> float:
    """Smallest a with V*_gamma <= a*sigma for every gamma < 1, from the undiscounted
    shortest-path value V*_1 (which dominates every discounted one)."""
    n = problem.n_states
    cost = np.where(problem.admissible, problem.stage_cost, np.inf)
    V = np.zeros(n)
    for _ in range(max_iters or 4 * n + 10):
        Vn = (cost + V[problem.successor]).min(axis=1)
        if np.allclose(Vn, V, rtol=0, atol=1e-12):
            break
        V = Vn
    else:
        raise NoCertificateError("undiscounted optimal cost is unbounded; no gamma-uniform value bound")
    pos = problem.sigma > 0
    if np.any(V[~pos] > 1e-12):
        raise NoCertificateError("optimal cost is positive on the attractor")
    return float(np.max(V[pos] / problem.sigma[pos], initial=0.0))


def solve_gamma_star(alpha_W: ComparisonFn, alpha_Vstar_bar: ComparisonFn, gamma0: float,
                     s_hi: float, n: int = 1024, tol: float = GAMMA_BISECT_TOL) -> float:
    """Smallest gamma* in [0, gamma0) with (1-gamma*) alpha_Vstar_bar <= alpha_W on a log probe grid."""
    s = np.logspace(math.log10(s_hi) - 10, math.log10(s_hi), n)
    aw, av = alpha_W(s), alpha_Vstar_bar(s)

    def ok(g):
        return bool(np.all((1.0 - g) * av <= aw * (1 + 1e-14)))

    if ok(0.0):
        return 0.0
    if not ok(gamma0) or gamma0 <= 0:
        raise NoStabilizingDiscountError(f"(1-gamma) alpha_Vstar_bar <= alpha_W fails for every gamma < {gamma0}")
    lo, hi = 0.0, gamma0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    if hi >= gamma0:
        raise NoStabilizingDiscountError("gamma* is not strictly below gamma0")
    return hi


@dataclass(frozen=True)
class SA5Certificate:
    alpha_Vstar_bar: ComparisonFn
    gamma_star: float
    gamma0: float

    def check(self, alpha_W: ComparisonFn, s_hi: float, n: int = 1024) -> CheckResult:
        s = np.logspace(math.log10(s_hi) - 6, math.log10(s_hi), n)
        m = alpha_W(s) - (1 - self.gamma_star) * self.alpha_Vstar_bar(s)
        j = int(np.argmin(m))
        ok = bool(m[j] >= -MARGIN_TOL * max(1.0, s[j])) and self.gamma_star < self.gamma0
        return CheckResult("sa5-gamma-star", ok, float(m[j]), {"s": s[j]}, n, MARGIN_TOL,
                           gamma=self.gamma_star)


@dataclass(frozen=True)
class LinearGainBundle:
    """All-linear gains: alpha_W = a_W s, alpha_W_bar <= a_W_bar s, alpha_Vstar_bar = a_Vstar_bar s,
    and alpha_V_bar(s, gamma) = chi_gain * M/(1 - a*gamma) s from the initial-policy envelope."""
    a_W: float
    a_W_bar: float
    a_Vstar_bar: float
    M: float = 1.0
    a: float = 1.0
    chi_gain: float = 1.0

    def __post_init__(self):
        if self.a_W <= 0:
            raise ValueError("a_W must be positive")
        if self.a_W_bar < 0 or self.a_Vstar_bar <= 0:
            raise ValueError("gains must be non-negative (a_Vstar_bar positive)")

    @property
    def gamma_star(self) -> float:
        return max(0.0, (self.a_Vstar_bar - self.a_W) / self.a_Vstar_bar)

    @property
    def gamma0(self) -> float:
        return min(1.0, 1.0 / self.a)

    def a_V_bar(self, gamma: float) -> float:
        if not 0.0 < gamma < self.gamma0:
            raise DiscountRangeError(f"gamma = {gamma} outside (0, gamma0 = {self.gamma0})")
        return self.chi_gain * self.M / (1.0 - self.a * gamma)

    def check_range(self, gamma: float):
        if not self.gamma_star < gamma < self.gamma0:
            raise DiscountRangeError(
                f"gamma = {gamma} outside (gamma* = {self.gamma_star:.6g}, gamma0 = {self.gamma0:.6g})")

    @classmethod
    def from_certificates(cls, det: DetectabilityCertificate, init: InitialPolicyCertificate,
                          alpha_Vstar_bar: ComparisonFn) -> "LinearGainBundle":
        gains = (det.alpha_W.gain, det.alpha_W_bar.gain, alpha_Vstar_bar.gain, init.chi.gain)
        if any(g is None for g in gains):
            raise ValueError("certificates are not all linear gains")
        return cls(gains[0], gains[1], gains[2], init.M, init.a, gains[3])

    def to_dict(self):
        return {"a_W": self.a_W, "a_W_bar": self.a_W_bar, "a_Vstar_bar": self.a_Vstar_bar,
                "M": self.M, "a": self.a, "chi_gain": self.chi_gain,
                "gamma_star": self.gamma_star, "gamma0": self.gamma0}


def gamma_star(lg: LinearGainBundle) -> float:
    """Closed-form discount threshold; raises if it does not sit below gamma0."""
    gs = lg.gamma_star
    if gs >= lg.gamma0:
        raise NoStabilizingDiscountError(f"gamma* = {gs:.6g} is not below gamma0 = {lg.gamma0:.6g}")
    return gs


def remark3_compare(lg: LinearGainBundle) -> tuple:
    """(gamma*, the threshold with a_W_bar added to a_Vstar_bar, a_Vstar_bar/(a_Vstar_bar + a_W)),
    all as unclamped closed forms."""
    gs = (lg.a_Vstar_bar - lg.a_W) / lg.a_Vstar_bar
    g6 = 1.0 - lg.a_W / (lg.a_Vstar_bar + lg.a_W_bar)
    g17 = lg.a_Vstar_bar / (lg.a_Vstar_bar + lg.a_W)
    return gs, g6, g17


def remark3_holds(lg: LinearGainBundle, rtol: float = 1e-12) -> bool:
    """gamma* is at most both alternative thresholds, up to rounding."""
    gs, g6, g17 = remark3_compare(lg)
    tol = rtol * max(1.0, abs(gs))
    return gs <= g6 + tol and gs <= g17 + tol


# -- Lyapunov-construction functions ----------------------------------------

@dataclass(frozen=True, eq=False)
class Table1Bundle:
    gamma: float
    gamma_star: float
    lower_Y: ComparisonFn
    alpha_Y: ComparisonFn
    upper_Ystar: ComparisonFn
    alpha_tilde: ComparisonFn
    decrease_map: ComparisonFn
    beta_tilde: KLBound
    beta_star: KLBound
    upper_Y: ComparisonFn
    alpha_V_bar: ComparisonFn
    det: DetectabilityCertificate
    beta_mode: str

    @property
    def lower_Ystar(self) -> ComparisonFn:
        return self.lower_Y

    @property
    def alpha_Ystar(self) -> ComparisonFn:
        return self.alpha_Y

    def Y(self, V, x) -> float:
        """Y^i(x) = V^i(x) + W(x)/gamma for a value function V."""
        return V(x) + self.det.W(x) / self.gamma

    def upsilon(self, i: int, s: float) -> float:
        g = self.gamma
        return (1.0 - g) * g ** i * self.alpha_V_bar(self.beta_star.value(s, i))

    def to_dict(self):
        return {"gamma": self.gamma, "gamma_star": self.gamma_star, "beta_mode": self.beta_mode,
                "lower_Y": self.lower_Y.to_dict(), "alpha_Y": self.alpha_Y.to_dict(),
                "upper_Ystar": self.upper_Ystar.to_dict(), "alpha_tilde": self.alpha_tilde.to_dict(),
                "decrease_map": self.decrease_map.to_dict(), "beta_star": self.beta_star.to_dict(),
                "upper_Y": self.upper_Y.to_dict(), "alpha_V_bar": self.alpha_V_bar.to_dict()}


def envelope_constants(lg: LinearGainBundle, gamma: float) -> "EnvelopeConstants":
    """c1, c2 of the exponential closed-loop envelope and K, lambda of the
    exponential optimal-loop bound, all at discount ``gamma``."""
    lg.check_range(gamma)
    gs = lg.gamma_star
    aV = lg.a_V_bar(gamma)
    c1 = (gamma * aV + lg.a_W_bar) / (gamma * lg.a_W)
    arg2 = 1.0 - lg.a_W * (gamma - gs) / (2 * gamma * (1 - gamma) * (aV + lg.a_W_bar / gamma))
    if gs > 0:
        K = (gs * lg.a_Vstar_bar + lg.a_W_bar) / (gs * lg.a_W)
        argl = 1.0 - lg.a_W * (gamma - gs) / (gamma * (1 - gamma) * (lg.a_Vstar_bar + lg.a_W_bar / gs))
    elif lg.a_W_bar == 0:
        K = lg.a_Vstar_bar / lg.a_W
        argl = 1.0 - lg.a_W / (lg.a_Vstar_bar * (1 - gamma))
    else:
        raise FormulaDomainError("gamma* = 0 with a_W_bar > 0 makes K infinite", a_W_bar=lg.a_W_bar)
    if not 0 < arg2 < 1:
        raise FormulaDomainError("c2 log argument outside (0, 1)", arg=arg2, gamma=gamma)
    if not 0 < argl < 1:
        raise FormulaDomainError("lambda log argument outside (0, 1)", arg=argl, gamma=gamma)
    return EnvelopeConstants(c1, -math.log(arg2), K, -math.log(argl), gamma)


@dataclass(frozen=True)
class EnvelopeConstants:
    c1: float
    c2: float
    K: float
    lam: float
    gamma: float

    def bound(self, sigma_x: float, k) -> float:
        return self.c1 * sigma_x * np.exp(-self.c2 * np.asarray(k, float))

    def to_dict(self):
        return {"c1": self.c1, "c2": self.c2, "K": self.K, "lambda": self.lam, "gamma": self.gamma}


def build_table1(det: DetectabilityCertificate, init: InitialPolicyCertificate, sa5: SA5Certificate,
                 gamma: float, beta_mode: str = "iterated", lg: LinearGainBundle | None = None) -> Table1Bundle:
    """Assemble the comparison functions of the Lyapunov construction at ``gamma``.

    ``beta_mode="iterated"`` builds beta* from the one-step decrease map;
    ``"exponential"`` uses the closed form K exp(-lambda k) s (linear gains only).
    """
    gs = sa5.gamma_star
    if not gs < gamma < init.gamma0:
        raise DiscountRangeError(f"gamma = {gamma} outside (gamma* = {gs:.6g}, gamma0 = {init.gamma0:.6g})")
    alpha_W, alpha_W_bar = det.alpha_W, det.alpha_W_bar
    alpha_Y = cf.scaled((gamma - gs) / (1.0 - gs), alpha_W)
    if alpha_W_bar.gain == 0:
        upper_Ystar = sa5.alpha_Vstar_bar
    elif gs > 0:
        upper_Ystar = cf.add(sa5.alpha_Vstar_bar, cf.scaled(1.0 / gs, alpha_W_bar))
    else:
        raise FormulaDomainError("gamma* = 0 with a nonzero alpha_W_bar leaves the upper Y* bound undefined")
    alpha_tilde = cf.compose(alpha_Y, cf.inverse(upper_Ystar))
    decrease = cf.contraction(alpha_tilde, 1.0 / gamma)
    beta_tilde = KLBound.iterated(decrease)
    if beta_mode == "iterated":
        beta_star = KLBound.iterated(decrease, outer=cf.inverse(alpha_W), inner=upper_Ystar)
    elif beta_mode == "exponential":
        if lg is None:
            lg = LinearGainBundle.from_certificates(det, init, sa5.alpha_Vstar_bar)
        env = envelope_constants(lg, gamma)
        beta_star = KLBound.exponential(env.K, env.lam)
    else:
        raise ValueError(f"unknown beta_mode {beta_mode!r}")
    alpha_V_bar = init.alpha_V_bar(gamma)
    upper_Y = alpha_V_bar if alpha_W_bar.gain == 0 else cf.add(alpha_V_bar, cf.scaled(1.0 / gamma, alpha_W_bar))
    return Table1Bundle(gamma, gs, alpha_W, alpha_Y, upper_Ystar, alpha_tilde, decrease, beta_tilde, beta_star,
                        upper_Y, alpha_V_bar, det, beta_mode)


def theorem1_bound(table: Table1Bundle, sigma_x: float, i: int) -> float:
    """gamma^i alpha_V_bar(beta*(sigma(x), i), gamma): the near-optimality bound at iteration i."""
    if sigma_x == 0:
        return 0.0
    return table.gamma ** i * table.alpha_V_bar(table.beta_star.value(sigma_x, i))


def theorem1_bound_linear(lg: LinearGainBundle, gamma: float, sigma_x: float, i: int) -> float:
    env = envelope_constants(lg, gamma)
    return gamma ** i * lg.a_V_bar(gamma) * env.K * math.exp(-env.lam * i) * sigma_x


def istar_general(table: Table1Bundle, delta: float, Delta: float) -> int:
    """Iterations after which trajectories from {sigma <= Delta} are ultimately bounded by delta."""
    if delta <= 0 or Delta <= 0:
        raise FormulaDomainError("delta and Delta must be positive", delta=delta, Delta=Delta)
    g = table.gamma
    inner = cf.invert(table.upper_Y, table.lower_Y(delta))
    num = table.alpha_Y(inner)
    s1 = cf.invert(table.lower_Y, table.upper_Y(Delta))
    den = 2.0 * (1.0 - g) * table.alpha_V_bar(table.beta_star.value(s1, 0))
    if den <= 0 or num <= 0:
        raise FormulaDomainError("log argument is not positive", num=num, den=den)
    arg = num / den
    if arg >= 1.0:
        return 0
    return max(0, math.ceil(math.log(arg) / math.log(g)))


def istar_linear_value(lg: LinearGainBundle, gamma: float) -> float:
    """The real-valued lower bound on i* for linear gains (before the ceiling)."""
    lg.check_range(gamma)
    gs = lg.gamma_star
    aV = lg.a_V_bar(gamma)
    q = gs * lg.a_Vstar_bar + lg.a_W_bar
    num = gs * (gamma - gs) * lg.a_W ** 2 / (2 * gamma * (1 - gamma) ** 2 * aV * q)
    den = gamma - gs * (gamma - gs) * lg.a_W / ((1 - gamma) * q) if q > 0 else math.nan
    if not 0 < den < 1:
        raise FormulaDomainError("denominator log argument outside (0, 1)", den_arg=den, num_arg=num, gamma=gamma)
    if num <= 0:
        raise FormulaDomainError("numerator log argument is not positive", den_arg=den, num_arg=num, gamma=gamma)
    if num >= 1.0:
        return 0.0
    return math.log(num) / math.log(den)


def istar_linear(lg: LinearGainBundle, gamma: float) -> int:
    return max(0, math.ceil(istar_linear_value(lg, gamma)))


# -- the whole bundle -------------------------------------------------------

@dataclass(eq=False)
class CertificateBundle:
    backend: str
    det: DetectabilityCertificate
    init: InitialPolicyCertificate
    sa5: SA5Certificate
    lg: LinearGainBundle | None
    checks: list = field(default_factory=list)
    s_hi: float = 1.0
    notes: list = field(default_factory=list)

    @property
    def gamma0(self) -> float:
        return self.init.gamma0

    @property
    def gamma_star(self) -> float:
        return self.sa5.gamma_star

    def in_range(self, gamma: float) -> bool:
        return self.gamma_star < gamma < self.gamma0

    def table1(self, gamma: float, beta_mode: str = "iterated") -> Table1Bundle:
        return build_table1(self.det, self.init, self.sa5, gamma, beta_mode, self.lg)

    def sweep_row(self, gamma: float, delta: float | None = None, Delta: float | None = None) -> dict:
        row = {"gamma": gamma, "in_range": self.in_range(gamma)}
        if not row["in_range"]:
            return row
        if self.lg is not None:
            try:
                row["istar_linear"] = istar_linear(self.lg, gamma)
                row["istar_linear_value"] = istar_linear_value(self.lg, gamma)
                row.update({k: v for k, v in envelope_constants(self.lg, gamma).to_dict().items() if k != "gamma"})
                row["a_V_bar"] = self.lg.a_V_bar(gamma)
            except FormulaDomainError as e:
                row["error"] = str(e)
        if delta is not None and Delta is not None:
            row["istar_general"] = istar_general(self.table1(gamma), delta, Delta)
        return row

    def to_dict(self) -> dict:
        d = {"backend": self.backend, "gamma0": self.gamma0, "gamma_star": self.gamma_star,
             "detectability": self.det.to_dict(), "initial_policy": self.init.to_dict(),
             "alpha_Vstar_bar": self.sa5.alpha_Vstar_bar.to_dict(), "probe_s_max": self.s_hi,
             "checks": [c.to_dict() for c in self.checks], "notes": list(self.notes)}
        if self.lg is not None:
            gs, g6, g17 = remark3_compare(self.lg)
            d["linear_gains"] = self.lg.to_dict()
            d["remark3"] = {"gamma_star": gs, "gamma_star_add_W_bar": g6, "gamma_star_ratio": g17}
        return jsonable(d)


def certify(problem, h0=None, W=None, S1=None, S2=None, n_probe: int = 1000, seed: int = 0) -> CertificateBundle:
    """Build and check every standing-assumption certificate for a problem.

    Finite problems: W from ``W`` (default 0) with the best linear gains, the
    value bound from the undiscounted optimal cost, and a bounded-cost
    envelope (rate 1) for the initial policy. LQ: quadratic W from (S1, S2)
    (default S2 = 0, S1 = Q), the undiscounted Riccati solution, and the
    closed-form initial envelope. Nonholonomic grid: the published constants,
    with the initial envelope probed on continuous trajectories.
    """
    notes = []
    if isinstance(problem, FiniteProblem):
        det = DetectabilityCertificate.finite_table(problem, W)
        h = initial_policy(problem) if h0 is None else as_policy(h0)
        init = lemma1_certificate(problem, h, rate=1.0)
        a_vs = finite_value_bound(problem)
        avs = cf.linear(max(a_vs, det.alpha_W.gain))
        s_hi = float(problem.sigma.max())
    elif isinstance(problem, LQProblem):
        if S1 is None and S2 is None:
            det = DetectabilityCertificate.lq_default(problem)
        else:
            det = DetectabilityCertificate.quadratic(S1, S2)
        lmi = verify_lmi(problem.A, problem.B, problem.Q, problem.R, det.S1, det.S2)
        init = lemma1_certificate(problem, h0)
        if not init.details["initial_policy_stabilizing"]:
            notes.append("initial policy not stabilizing (rho(A+BK0) >= 1); its discounted cost is still finite "
                         "for gamma < gamma0")
        P1 = undiscounted_riccati(problem)
        avs = cf.linear(float(np.linalg.eigvalsh(P1).max()))
        s_hi = 100.0
    elif isinstance(problem, GridProblem):
        c = NONHOLONOMIC
        det = DetectabilityCertificate.zero(cf.linear(float(c["alpha_W"])))
        init = lemma1_certificate(problem, h0, declared=(float(c["M"]), float(c["a"])), seed=seed)
        avs = cf.linear(float(c["alpha_Vstar_bar"]))
        s_hi = problem.delta_grid
        notes.append("recursive feasibility holds on the grid by construction (finite non-empty action sets)")
        notes.append("value bound 22/5 and detectability with W = 0 are taken from the published example")
    else:
        raise TypeError(type(problem))
    checks = verify_detectability(problem, det, n_probe, seed)
    if isinstance(problem, LQProblem):
        checks.append(CheckResult("lmi", lmi.passed, -lmi.max_eig, None if lmi.passed else {"max_eig": lmi.max_eig},
                                  1, LMI_TOL))
    lg = None
    if all(f.gain is not None for f in (det.alpha_W, det.alpha_W_bar, avs, init.chi)):
        lg = LinearGainBundle.from_certificates(det, init, avs)
        gs = lg.gamma_star
    else:
        gs = solve_gamma_star(det.alpha_W, avs, init.gamma0, s_hi)
    sa5 = SA5Certificate(avs, gs, init.gamma0)
    checks.append(sa5.check(det.alpha_W, s_hi))
    if gs >= init.gamma0:
        checks[-1].informational = True
        notes.append(f"gamma* = {gs:.6g} is not below gamma0 = {init.gamma0:.6g}: no certified discount range")
    return CertificateBundle(problem.backend, det, init, sa5, lg, checks, s_hi, notes)

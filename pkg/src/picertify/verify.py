"""Empirical checks of the near-optimality and stability inequalities along PI runs."""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import qmc

from . import certificates as C
from .pi import PIRun, ValueFn, as_policy, bellman_residual, optimal_closed_loop, value_iteration_oracle
from .report import CheckResult, VerificationReport, digest
from .system import FiniteProblem, GridProblem, LQProblem, is_schur

DEFAULT_HORIZON = 200
DEFAULT_SAMPLES = 100
SETTLE_WINDOW = 50
TOL_EXACT = 1e-8
TOL_MONOTONE = 1e-9


# -- samples and trajectories --------------------------------------------

def sample_states(problem, n: int = DEFAULT_SAMPLES, seed: int = 0, Delta: float | None = None):
    """All states (finite); ``n`` scrambled Halton points in {sigma <= Delta} (LQ, grid).

    Grid samples are returned as node indices of their nearest nodes.
    """
    if isinstance(problem, FiniteProblem):
        return np.arange(problem.n_states)
    if isinstance(problem, LQProblem):
        Delta = 1.0 if Delta is None else Delta
        r = math.sqrt(Delta)
        eng = qmc.Halton(problem.n, scramble=True, seed=seed)
        out = []
        while len(out) < n:
            X = r * (2.0 * eng.random(4 * n) - 1.0)
            out.extend(X[np.einsum("ij,ij->i", X, X) <= Delta].tolist())
        return np.asarray(out[:n])
    if isinstance(problem, GridProblem):
        X = C.sample_sublevel(problem, n, seed, Delta)
        return problem.node_index(X)
    raise TypeError(type(problem))


def _sigma(problem, X):
    if isinstance(problem, LQProblem):
        X = np.atleast_2d(X)
        return np.einsum("ij,ij->i", X, X)
    fin = problem.finite if isinstance(problem, GridProblem) else problem
    return fin.sigma[np.asarray(X, np.int64)]


def closed_loop_sigma(problem, policy, sample, horizon: int) -> tuple:
    """sigma along closed-loop trajectories: an array (n_samples, horizon+1) plus an
    escape mask (grid trajectories that left the box are padded with nan)."""
    policy = as_policy(policy)
    if isinstance(problem, LQProblem):
        Acl = problem.A + problem.B @ policy.K
        X = np.atleast_2d(np.asarray(sample, float))
        out = np.empty((len(X), horizon + 1))
        for k in range(horizon + 1):
            out[:, k] = np.einsum("ij,ij->i", X, X)
            X = X @ Acl.T
        return out, np.zeros(len(out), bool)
    fin = problem.finite if isinstance(problem, GridProblem) else problem
    x = np.asarray(sample, np.int64).copy()
    out = np.empty((len(x), horizon + 1))
    escaped = np.zeros(len(x), bool)
    sink = problem.sink if isinstance(problem, GridProblem) else -1
    for k in range(horizon + 1):
        escaped |= x == sink
        out[:, k] = np.where(escaped, np.nan, fin.sigma[x])
        x = fin.successor[x, policy.table[x]]
    return out, escaped


def _iterate_states(problem, policy, sample, steps: int):
    """phi(steps, x) under ``policy`` for every sample."""
    policy = as_policy(policy)
    if isinstance(problem, LQProblem):
        M = np.linalg.matrix_power(problem.A + problem.B @ policy.K, steps)
        return np.atleast_2d(sample) @ M.T
    fin = problem.finite if isinstance(problem, GridProblem) else problem
    x = np.asarray(sample, np.int64).copy()
    for _ in range(steps):
        x = fin.successor[x, policy.table[x]]
    return x


def _values(V: ValueFn, X):
    if V.table is not None:
        return V.table[np.asarray(X, np.int64)]
    X = np.atleast_2d(X)
    return np.einsum("ij,jk,ik->i", X, V.P, X)


def _W(problem, det, X):
    if det is None or det.is_zero:
        return np.zeros(len(np.atleast_1d(X)) if not isinstance(problem, LQProblem) else len(np.atleast_2d(X)))
    if isinstance(problem, LQProblem):
        X = np.atleast_2d(X)
        return np.einsum("ij,jk,ik->i", X, det.S2, X)
    if det.W_table is not None:
        return det.W_table[np.asarray(X, np.int64)]
    return np.array([det.W(problem.nodes[x]) for x in X])


def _witness_state(problem, x):
    return x.tolist() if isinstance(problem, LQProblem) else int(x)


def _result(kind, margins, witness_fn, tol, **kw):
    margins = np.asarray(margins, float)
    finite = np.where(np.isnan(margins), np.inf, margins)
    if finite.size == 0:
        return CheckResult(kind, True, math.inf, None, 0, tol, **kw)
    j = np.unravel_index(int(np.argmin(finite)), finite.shape)
    worst = float(finite[j])
    passed = worst >= -tol
    return CheckResult(kind, passed, worst, witness_fn(j), int(np.isfinite(finite).sum()), tol, **kw)


# -- checks ---------------------------------------------------------------

def check_lemma2(pirun: PIRun, sample=None, tol: float = TOL_MONOTONE) -> CheckResult:
    """V^i - V^{i+1} >= 0 at every sampled state and every iteration."""
    if len(pirun) < 2:
        return CheckResult("lemma2-monotone", True, 0.0, None, 0, tol, gamma=pirun.gamma)
    rows = []
    for i in range(len(pirun) - 1):
        a, b = pirun.value(i), pirun.value(i + 1)
        if a.table is not None:
            X = np.arange(len(a.table)) if sample is None else sample
            rows.append(a.table[X] - b.table[X])
        else:
            X = np.eye(a.P.shape[0]) if sample is None else sample
            rows.append(_values(a, X) - _values(b, X))
            rows[-1] = np.minimum(rows[-1], np.linalg.eigvalsh(a.P - b.P).min())
    M = np.array(rows)

    def wit(j):
        return {"iteration": int(j[0]), "state_index": int(j[1])}

    return _result("lemma2-monotone", M, wit, tol, gamma=pirun.gamma)


def check_bellman(problem, value: ValueFn, tol: float = 1e-10) -> CheckResult:
    r = bellman_residual(problem, value)
    return CheckResult("bellman-residual", r <= tol, tol - r, None if r <= tol else {"residual": r}, 1, tol,
                       gamma=problem.gamma, details={"residual": r})


def check_theorem1(problem, pirun: PIRun, v_star: ValueFn, h_star=None, sample=None, certs=None,
                   tol: float = TOL_MONOTONE, max_i: int | None = None) -> list:
    """(V^i - V*)(x) <= gamma^i (V^0 - V*)(phi*(i, x)) and, with certificates,
    (V^i - V*)(x) <= gamma^i alpha_V_bar(beta*(sigma(x), i))."""
    g = problem.gamma
    h_star = optimal_closed_loop(problem, v_star) if h_star is None else as_policy(h_star)
    X = sample_states(problem) if sample is None else sample
    last = len(pirun) - 1 if max_i is None else max_i
    V0 = pirun.value(0)
    first, second = [], []
    table = None
    if certs is not None and certs.in_range(g) and not isinstance(problem, GridProblem):
        table = certs.table1(g)
    sig = _sigma(problem, X)
    phi = X
    for i in range(last + 1):
        gap = _values(pirun.value(i), X) - _values(v_star, X)
        rhs = g ** i * (_values(V0, phi) - _values(v_star, phi))
        first.append(rhs - gap)
        if table is not None:
            bnd = np.array([C.theorem1_bound(table, float(s), i) for s in sig])
            second.append(bnd - gap)
        phi = _iterate_states(problem, h_star, phi, 1)

    def wit(j):
        return {"iteration": int(j[0]), "x": _witness_state(problem, X[j[1]])}

    out = [_result("thm1-first-ineq", np.array(first), wit, tol, gamma=g)]
    if table is not None:
        out.append(_result("thm1-full-bound", np.array(second), wit, TOL_EXACT, gamma=g))
    return out


def check_theorem2(problem, pirun: PIRun, certs, sample=None, tol: float = TOL_EXACT) -> list:
    """Bounds alpha_W(sigma) <= Y^i <= alpha_Y_bar(sigma) and the dissipation
    Y^i(v) - Y^i(x) <= (-alpha_Y(sigma) + Upsilon^i(sigma))/gamma, v = f(x, h^i(x))."""
    g = problem.gamma
    table = certs.table1(g)
    X = sample_states(problem) if sample is None else sample
    sig = _sigma(problem, X)
    W = _W(problem, certs.det, X)
    lo_m, up_m, dec_m = [], [], []
    for i in range(len(pirun)):
        V = pirun.value(i)
        Y = _values(V, X) + W / g
        lo_m.append(Y - table.lower_Y(sig))
        up_m.append(table.upper_Y(sig) - Y)
        Xn = _iterate_states(problem, pirun.policy(i), X, 1)
        Yn = _values(V, Xn) + _W(problem, certs.det, Xn) / g
        ups = np.array([table.upsilon(i, float(s)) if s > 0 else 0.0 for s in sig])
        dec_m.append((-table.alpha_Y(sig) + ups) / g - (Yn - Y))

    def wit(j):
        return {"iteration": int(j[0]), "x": _witness_state(problem, X[j[1]])}

    scale = lambda M: np.array(M) / np.maximum(1.0, np.abs(np.array(M)).max())  # noqa: E731
    return [_result("thm2-lyapunov-bounds", np.minimum(scale(lo_m), scale(up_m)), wit, tol, gamma=g),
            _result("thm2-lyapunov-decrease", np.array(dec_m), wit, tol, gamma=g)]


def settle_time(series: np.ndarray, delta: float, window: int = SETTLE_WINDOW) -> int | None:
    """First k after which the series stays <= delta for ``window`` consecutive steps (and to the end)."""
    ok = series <= delta
    n = len(series)
    bad = np.flatnonzero(~ok)
    k = 0 if bad.size == 0 else int(bad[-1]) + 1
    if n - k < window:
        return None
    return k


def delta_for_iteration(table: C.Table1Bundle, i: int, Delta: float) -> float:
    """Smallest delta <= Delta (to 1e-6 relative) whose iteration threshold is at most ``i``.

    Returns ``Delta`` itself when even delta = Delta needs more than ``i``
    iterations; the caller then reports the check as informational.
    """
    lo, hi = 1e-12, Delta
    if C.istar_general(table, hi, Delta) > i:
        return Delta
    if C.istar_general(table, lo, Delta) <= i:
        return lo
    while hi / lo > 1 + 1e-6:
        mid = math.sqrt(lo * hi)
        if C.istar_general(table, mid, Delta) <= i:
            hi = mid
        else:
            lo = mid
    return hi


def check_theorem3(problem, policy, i: int, certs, delta: float, Delta: float, sample=None,
                   horizon: int = DEFAULT_HORIZON, istar: int | None = None) -> list:
    """Ultimate bound sigma(phi(k)) <= delta after a settling time, and uniform
    boundedness by the monotone envelope of the sampled peaks. Informational below i*."""
    X = sample_states(problem, Delta=Delta) if sample is None else sample
    sig0 = _sigma(problem, X)
    S, escaped = closed_loop_sigma(problem, policy, X, horizon)
    info = istar is not None and i < istar
    settles = [settle_time(S[j], delta) for j in range(len(X))]
    unsettled = [j for j, k in enumerate(settles) if k is None]
    ks = [k for k in settles if k is not None]
    settle_margin = -1.0 if unsettled else 1.0
    wit = None if not unsettled else {"x": _witness_state(problem, X[unsettled[0]]), "iteration": i,
                                      "delta": delta, "tail_max": float(np.nanmax(S[unsettled[0], -SETTLE_WINDOW:]))}
    peaks = np.nanmax(S, axis=1)
    order = np.argsort(sig0, kind="stable")
    envelope = np.maximum.accumulate(peaks[order])
    bounded = bool(np.all(np.isfinite(envelope))) and not escaped.any()
    bwit = None
    if not bounded:
        j = int(np.flatnonzero(escaped | ~np.isfinite(peaks))[0])
        bwit = {"x": _witness_state(problem, X[j]), "iteration": i, "escaped": bool(escaped[j])}
    env = {"sigma0": sig0[order].tolist(), "peak_envelope": envelope.tolist()}
    return [CheckResult("thm3-practical", not unsettled, settle_margin, wit, len(X), 0.0, informational=info,
                        gamma=problem.gamma, iteration=i,
                        details={"delta": delta, "Delta": Delta, "K_settle": max(ks) if ks else None,
                                 "unsettled": len(unsettled)}),
            CheckResult("thm3-bounded", bounded, 0.0 if bounded else -1.0, bwit, len(X), 0.0, informational=info,
                        gamma=problem.gamma, iteration=i, details={"envelope": env})]


def grid_slack(problem: GridProblem, horizon: int) -> float:
    """max projection displacement x horizon x Lipschitz constant of sigma on the box."""
    nodes = problem.nodes
    h = problem.spacing
    L = 0.0
    for j in range(problem.dimension):
        e = np.zeros(problem.dimension)
        e[j] = h[j]
        inside = nodes[:, j] + h[j] <= problem.bounds[j, 1] + 1e-12
        d = np.abs(problem.sigma_fn(nodes[inside] + e) - problem.sigma_fn(nodes[inside])) / h[j]
        L += float(d.max()) ** 2
    return problem.max_displacement * horizon * math.sqrt(L)


def check_corollary1(problem, policy, i: int, lg: C.LinearGainBundle, gamma: float, sample=None,
                     horizon: int = DEFAULT_HORIZON, tol: float = 1e-9, istar: int | None = None) -> CheckResult:
    """sigma(phi^i(k, x)) <= c1 sigma(x) exp(-c2 k) for k <= horizon.

    On a grid the exact margin is measured on the projected closed loop and
    compared against tol + eps_grid; the two are reported separately.
    """
    env = C.envelope_constants(lg, gamma)
    X = sample_states(problem) if sample is None else sample
    sig0 = _sigma(problem, X)
    S, escaped = closed_loop_sigma(problem, policy, X, horizon)
    ks = np.arange(horizon + 1)
    bound = env.c1 * sig0[:, None] * np.exp(-env.c2 * ks)[None, :]
    M = bound - S
    M[escaped] = np.where(np.isnan(M[escaped]), -np.inf, M[escaped])
    slack = grid_slack(problem, horizon) if isinstance(problem, GridProblem) else 0.0
    j = np.unravel_index(int(np.argmin(M)), M.shape)
    exact = float(M[j])
    passed = exact >= -(tol + slack)
    witness = None
    if not passed or exact < -tol:
        witness = {"x": _witness_state(problem, X[j[0]]), "k": int(j[1]), "iteration": i, "gamma": gamma,
                   "c1": env.c1, "c2": env.c2, "sigma": float(S[j]) if np.isfinite(S[j]) else None,
                   "bound": float(bound[j]), "escaped": bool(escaped[j[0]])}
    info = istar is not None and i < istar
    return CheckResult("cor1-envelope", passed, exact, witness, int(M.size), tol, informational=info,
                       gamma=gamma, iteration=i, exact_margin=exact, slack=slack,
                       details={"c1": env.c1, "c2": env.c2, "escaped": int(escaped.sum()),
                                "excess_beyond_slack": max(0.0, -exact - tol - slack)})


def replay_witness(problem, policy, witness: dict) -> float:
    """Recompute sigma(phi(k, x)) - c1 sigma(x) exp(-c2 k) for a recorded envelope witness."""
    x = np.asarray(witness["x"], float) if isinstance(problem, LQProblem) else np.array([int(witness["x"])])
    S, escaped = closed_loop_sigma(problem, policy, np.atleast_1d(x) if not isinstance(problem, LQProblem)
                                   else np.atleast_2d(x), int(witness["k"]))
    if escaped[0]:
        return math.inf
    s0, sk = float(S[0, 0]), float(S[0, -1])
    return sk - witness["c1"] * s0 * math.exp(-witness["c2"] * int(witness["k"]))


def check_proposition1(problem, h_star, table: C.Table1Bundle, sample=None, horizon: int = DEFAULT_HORIZON,
                       tol: float = TOL_EXACT) -> list:
    """sigma(phi*(k, x)) <= beta*(sigma(x), k), plus beta*(s, 0) >= s on a probe grid."""
    X = sample_states(problem) if sample is None else sample
    sig0 = _sigma(problem, X)
    S, escaped = closed_loop_sigma(problem, h_star, X, horizon)
    cache = {}
    B = np.empty_like(S)
    for j, s in enumerate(sig0):
        key = float(s)
        if key not in cache:
            cache[key] = table.beta_star.values(key, horizon) if key > 0 else np.zeros(horizon + 1)
        B[j] = cache[key]
    M = (B - S) / np.maximum(1.0, B)

    def wit(jj):
        return {"x": _witness_state(problem, X[jj[0]]), "k": int(jj[1])}

    hi = max(float(sig0.max(initial=0.0)), 1.0)
    grid = np.logspace(math.log10(hi) - 6, math.log10(hi), 64)
    k0 = np.array([table.beta_star.value(float(s), 0) for s in grid]) - grid
    return [_result("prop1-kl", M, wit, tol, gamma=problem.gamma),
            _result("prop1-kl-k0", k0 / np.maximum(1.0, grid), lambda jj: {"s": float(grid[jj[0]])}, tol,
                    gamma=problem.gamma)]


# -- suite ----------------------------------------------------------------

def verify_all(problem, pirun: PIRun, certs=None, v_star: ValueFn | None = None, sample=None,
               horizon: int = DEFAULT_HORIZON, iteration: int | None = None, Delta: float | None = None,
               tol: float = TOL_EXACT, seed: int = 0) -> VerificationReport:
    """Every applicable check for one (problem, gamma) pair."""
    g = problem.gamma
    report = VerificationReport(environment={"backend": problem.backend, "gamma": g, "horizon": horizon,
                                             "seed": seed, "tol": tol})
    if certs is not None:
        report.environment["certificate_hash"] = digest(certs.to_dict())
        for c in certs.checks:
            report.add(c)
    if isinstance(problem, GridProblem):
        report.environment["grid"] = {"points_per_axis": problem.points_per_axis,
                                      "bounds": problem.bounds.tolist(), "delta_grid": problem.delta_grid,
                                      "max_displacement": problem.max_displacement}
        Delta = problem.delta_grid if Delta is None else Delta
    Delta = 1.0 if Delta is None else Delta
    if sample is None:
        sample = sample_states(problem, seed=seed, Delta=Delta)
    v_star = value_iteration_oracle(problem) if v_star is None else v_star
    h_star = optimal_closed_loop(problem, v_star)
    report.add(check_lemma2(pirun))
    report.add(check_bellman(problem, pirun.final_value, max(tol * 1e-2, 1e-10)))
    for c in check_theorem1(problem, pirun, v_star, h_star, None if isinstance(problem, LQProblem) else
                            _full_states(problem), certs, TOL_MONOTONE):
        report.add(c)
    if isinstance(problem, LQProblem):
        err = float(np.linalg.norm(pirun.final_value.P - v_star.P, 2))
        report.add(CheckResult("riccati-agreement", err <= tol, tol - err, None if err <= tol else {"error": err},
                               1, tol, gamma=g))
    if certs is None or not certs.in_range(g):
        if certs is not None:
            report.environment["note"] = "gamma outside (gamma*, gamma0): stability checks skipped"
        return report
    exact = not isinstance(problem, GridProblem)
    table = certs.table1(g)
    if exact:
        for c in check_theorem2(problem, pirun, certs, sample, tol):
            report.add(c)
        for c in check_proposition1(problem, h_star, table, sample, horizon, tol):
            report.add(c)
    istar = None
    if certs.lg is not None:
        try:
            istar = C.istar_linear(certs.lg, g)
        except C.FormulaDomainError:
            istar = None
    i = iteration if iteration is not None else (istar if istar is not None else len(pirun) - 1)
    report.environment["iteration"] = i
    report.environment["istar_linear"] = istar
    policy = pirun.policy(i)
    if isinstance(problem, LQProblem):
        Acl = problem.A + problem.B @ policy.K
        ok = is_schur(Acl)
        report.add(CheckResult("schur-closed-loop", ok, 0.0 if ok else -1.0,
                               None if ok else {"iteration": i, "K": policy.K}, 1, 0.0, gamma=g, iteration=i,
                               informational=istar is not None and i < istar))
    if certs.lg is not None and istar is not None:
        report.add(check_corollary1(problem, policy, i, certs.lg, g, sample, horizon, 1e-9 if exact else tol,
                                    istar))
    try:
        delta = delta_for_iteration(table, i, Delta)
        ig = C.istar_general(table, delta, Delta)
    except C.FormulaDomainError:
        delta, ig = None, None
    if delta is not None:
        for c in check_theorem3(problem, policy, i, certs, delta, Delta, sample, horizon, ig):
            if not exact:
                c.informational = True
            report.add(c)
    return report


def _full_states(problem):
    fin = problem.finite if isinstance(problem, GridProblem) else problem
    return np.arange(fin.n_states)

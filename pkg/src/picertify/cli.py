"""Command-line entry point: solve, certify, verify, reproduce."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import certificates as C
from . import verify as V
from .errors import PICertifyError
from .pi import PIRun, Policy, run_pi, value_iteration_oracle
from .report import CheckResult, VerificationReport, jsonable
from .system import (GridProblem, LQProblem, build_lq2_example, build_lq_example,
                     build_nonholonomic_example, load_problem)

log = logging.getLogger("picertify")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2
REPRODUCE_SWEEP = 21


class UsageError(Exception):
    pass


def threads() -> int:
    env = os.environ.get("PI_CERTIFY_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as e:
            raise UsageError(f"PI_CERTIFY_THREADS must be an integer, got {env!r}") from e
        if n < 1:
            raise UsageError("PI_CERTIFY_THREADS must be at least 1")
        return n
    return min(4, os.cpu_count() or 1)


def parse_gamma(text: str) -> float:
    g = float(text)
    if not 0.0 < g < 1.0:
        raise argparse.ArgumentTypeError(f"gamma must lie in (0, 1), got {text}")
    return g


def parse_sweep(text: str) -> list:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("--gamma-sweep takes LO,HI,N")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if not (0.0 < lo <= hi < 1.0) or n < 1:
        raise argparse.ArgumentTypeError(f"bad sweep {text!r}: need 0 < LO <= HI < 1 and N >= 1")
    return np.linspace(lo, hi, n).tolist()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="picertify", description=(
        "Policy iteration for discounted optimal control with near-optimality and stability certificates. "
        "Environment: PI_CERTIFY_THREADS sets the number of worker threads for gamma sweeps. "
        "Exit codes: 0 success, 1 verification failure, 2 usage or configuration error."))
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, problem=True):
        if problem:
            sp.add_argument("--problem", required=True, metavar="PATH", help="problem JSON file")
        sp.add_argument("--gamma", type=parse_gamma, help="discount factor in (0, 1); overrides the file")
        sp.add_argument("--out", default="picertify-out", metavar="DIR", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for low-discrepancy samples")
        sp.add_argument("--tol", type=float, default=V.TOL_EXACT, help="check tolerance")
        sp.add_argument("--horizon", type=int, default=V.DEFAULT_HORIZON, help="rollout horizon")
        sp.add_argument("--grid-points", type=int, metavar="N", help="grid points per axis (grid problems)")

    s = sub.add_parser("solve", help="run policy iteration")
    common(s)
    s.add_argument("--max-iters", type=int)
    c = sub.add_parser("certify", help="build and check the assumption certificates")
    common(c)
    c.add_argument("--gamma-sweep", type=parse_sweep, metavar="LO,HI,N", help="discounts for the threshold table")
    c.add_argument("--delta", type=float, help="ultimate bound for the general iteration threshold")
    c.add_argument("--Delta", type=float, help="initial-state level for the general iteration threshold")
    v = sub.add_parser("verify", help="check every inequality along a PI run")
    common(v)
    v.add_argument("--pirun", metavar="PATH", help="use a stored pirun.json instead of re-solving")
    v.add_argument("--iteration", type=int, help="PI iteration whose policy is checked (default i*)")
    r = sub.add_parser("reproduce", help="reproduce a bundled example end to end")
    r.add_argument("example", help="lq or nonholonomic")
    common(r, problem=False)
    r.add_argument("--gamma-sweep", type=parse_sweep, metavar="LO,HI,N")
    return p


# -- helpers ----------------------------------------------------------------

def load(args):
    path = Path(args.problem)
    if not path.is_file():
        raise UsageError(f"problem file not found: {path}")
    try:
        problem, extras = load_problem(path)
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read problem {path}: {e}") from e
    if isinstance(problem, GridProblem) and args.grid_points:
        d = problem.to_dict()
        problem = build_nonholonomic_example(problem.gamma, d["grid"]["bound"], args.grid_points,
                                             d["grid"]["actions_per_axis"], d["grid"]["action_bound"])
    if args.gamma is not None:
        problem = problem.with_gamma(args.gamma)
    return problem, extras


def initial_from_extras(problem, extras):
    h = extras.get("initial_policy")
    if h is None:
        return None
    return Policy.from_dict(h)


def cert_inputs(extras):
    c = extras.get("certificate", {})
    kw = {}
    if "W" in c:
        kw["W"] = np.asarray(c["W"], float)
    if "S1" in c:
        kw["S1"], kw["S2"] = np.asarray(c["S1"], float), np.asarray(c["S2"], float)
    return kw


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(jsonable(obj), indent=1, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _state_rows(problem, pirun: PIRun):
    """values.csv / policy.csv rows: one per state (finite) or per matrix entry (LQ)."""
    if isinstance(problem, LQProblem):
        vals = [(i, r, c, pirun.value(i).P[r, c]) for i in range(len(pirun))
                for r in range(problem.n) for c in range(problem.n)]
        pols = [(i, r, c, pirun.policy(i).K[r, c]) for i in range(len(pirun))
                for r in range(problem.m) for c in range(problem.n)]
        return ["i", "row", "col", "P"], vals, ["i", "row", "col", "K"], pols
    V = pirun.final_value.table
    h = pirun.final_policy.table
    return (["state", "value"], [(x, V[x]) for x in range(len(V))],
            ["state", "action"], [(x, int(h[x])) for x in range(len(h))])


def write_solution(out: Path, problem, pirun: PIRun) -> None:
    write_json(out / "pirun.json", pirun.to_dict())
    vh, vr, ph, pr = _state_rows(problem, pirun)
    write_csv(out / "values.csv", vh, vr)
    write_csv(out / "policy.csv", ph, pr)


def sweep_table(bundle: C.CertificateBundle, gammas, delta=None, Delta=None) -> list:
    with ThreadPoolExecutor(max_workers=threads()) as pool:
        return list(pool.map(lambda g: bundle.sweep_row(g, delta, Delta), gammas))


def default_sweep(bundle: C.CertificateBundle) -> list:
    lo, hi = bundle.gamma_star, bundle.gamma0
    if lo >= hi:
        return []
    return np.linspace(lo, hi, REPRODUCE_SWEEP + 2)[1:-1].tolist()


def write_plotdata(out: Path, problem, pirun: PIRun, bundle, report: VerificationReport, sample, horizon) -> None:
    pd = out / "plotdata"
    pd.mkdir(exist_ok=True)
    i = report.environment.get("iteration")
    g = problem.gamma
    if i is not None and bundle is not None and bundle.lg is not None and bundle.in_range(g):
        try:
            env = C.envelope_constants(bundle.lg, g)
        except C.FormulaDomainError:
            env = None
        if env is not None:
            S, _ = V.closed_loop_sigma(problem, pirun.policy(i), sample, horizon)
            rows = []
            for j in range(len(S)):
                for k in range(horizon + 1):
                    rows.append((j, k, S[j, k], env.c1 * S[j, 0] * np.exp(-env.c2 * k)))
            write_csv(pd / "envelope.csv", ["sample", "k", "sigma", "bound"], rows)
    if bundle is not None and bundle.in_range(g) and not isinstance(problem, GridProblem):
        table = bundle.table1(g)
        sig = V._sigma(problem, sample)
        s = float(np.max(sig))
        v_star = value_iteration_oracle(problem)
        rows = []
        for it in range(len(pirun)):
            gap = V._values(pirun.value(it), sample) - V._values(v_star, sample)
            rows.append((it, float(np.max(gap)), C.theorem1_bound(table, s, it)))
        write_csv(pd / "theorem1_bound.csv", ["i", "max_gap", "bound_at_max_sigma"], rows)


def print_report(report: VerificationReport, stream=None) -> None:
    stream = stream or sys.stdout
    for c in report.checks:
        tag = "PASS" if c.passed else ("INFO" if c.informational else "FAIL")
        extra = "" if c.slack is None else f" slack={c.slack:.6g}"
        print(f"{tag} {c.kind} margin={c.worst_margin:.6g}{extra}", file=stream)
        if not c.passed:
            print(f"     witness {json.dumps(jsonable(c.witness), sort_keys=True)}", file=stream)


def finish_report(out: Path, report: VerificationReport) -> int:
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    print_report(report)
    exact = report.environment.get("backend") != "grid"
    if not report.passed and exact:
        return EXIT_VERIFY
    if not report.passed:
        log.warning("grid checks exceeded the reported slack; see report.json")
        return EXIT_VERIFY
    return EXIT_OK


# -- commands ---------------------------------------------------------------

def cmd_solve(args) -> int:
    problem, extras = load(args)
    pirun = run_pi(problem, initial_from_extras(problem, extras), args.max_iters)
    out = outdir(args)
    write_solution(out, problem, pirun)
    print(f"converged_at={pirun.converged_at} stop={pirun.stop_reason} "
          f"residual={pirun.bellman_residuals[-1]:.3g} iterates={len(pirun)}")
    return EXIT_OK


def cmd_certify(args) -> int:
    problem, extras = load(args)
    bundle = C.certify(problem, initial_from_extras(problem, extras), seed=args.seed, **cert_inputs(extras))
    gammas = args.gamma_sweep or default_sweep(bundle)
    if args.gamma is not None:
        gammas = sorted(set(gammas) | {args.gamma})
    d = bundle.to_dict()
    d["sweep"] = sweep_table(bundle, gammas, args.delta, args.Delta)
    out = outdir(args)
    write_json(out / "certificates.json", d)
    print(f"gamma0={bundle.gamma0:.12g} gamma_star={bundle.gamma_star:.12g}")
    for row in d["sweep"]:
        flag = "" if row["in_range"] else " out-of-range"
        print(f"gamma={row['gamma']:.6g} istar={row.get('istar_linear', '-')}{flag}")
    for note in bundle.notes:
        print(f"note: {note}")
    failed = [c for c in bundle.checks if c.counts_as_failure]
    for c in failed:
        print(f"FAIL {c.kind} margin={c.worst_margin:.6g} witness={json.dumps(jsonable(c.witness))}")
    return EXIT_VERIFY if failed else EXIT_OK


def _load_pirun(path: str, problem) -> PIRun:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"pirun file not found: {p}")
    try:
        run = PIRun.from_dict(json.loads(p.read_text()))
    except (KeyError, ValueError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read {p}: {e}") from e
    if abs(run.gamma - problem.gamma) > 1e-15:
        raise UsageError(f"{p} was computed at gamma={run.gamma}, problem has gamma={problem.gamma}")
    return run


def run_verify(problem, pirun, bundle, out: Path, args, iteration=None) -> int:
    report = V.verify_all(problem, pirun, bundle, horizon=args.horizon, iteration=iteration,
                          tol=args.tol, seed=args.seed)
    Delta = problem.delta_grid if isinstance(problem, GridProblem) else 1.0
    sample = V.sample_states(problem, seed=args.seed, Delta=Delta)
    write_plotdata(out, problem, pirun, bundle, report, sample, args.horizon)
    return finish_report(out, report)


def cmd_verify(args) -> int:
    problem, extras = load(args)
    bundle = C.certify(problem, initial_from_extras(problem, extras), seed=args.seed, **cert_inputs(extras))
    if args.pirun:
        pirun = _load_pirun(args.pirun, problem)
    else:
        pirun = run_pi(problem, initial_from_extras(problem, extras))
    out = outdir(args)
    write_json(out / "certificates.json", bundle.to_dict())
    return run_verify(problem, pirun, bundle, out, args, args.iteration)


def cmd_reproduce(args) -> int:
    name = args.example
    if name not in ("lq", "nonholonomic"):
        raise UsageError(f"unknown example {name!r}; choose lq or nonholonomic")
    out = outdir(args)
    if name == "nonholonomic":
        gamma = args.gamma or 0.86
        problem = build_nonholonomic_example(gamma, points_per_axis=args.grid_points or 41)
    else:
        gamma = args.gamma or 0.6
        problem = build_lq2_example(gamma)
    bundle = C.certify(problem, seed=args.seed)
    gammas = args.gamma_sweep or default_sweep(bundle)
    rows = sweep_table(bundle, sorted(set(gammas) | {gamma}))
    d = bundle.to_dict()
    d["sweep"] = rows
    write_json(out / "certificates.json", d)
    print(f"{name}: gamma0={bundle.gamma0:.12g} gamma_star={bundle.gamma_star:.12g}")
    write_csv(out / "istar_table.csv", ["gamma", "in_range", "istar"],
              [(r["gamma"], int(r["in_range"]), r.get("istar_linear", "")) for r in rows])
    for r in rows:
        print(f"gamma={r['gamma']:.6g}, i*={r.get('istar_linear', '-')}")
    pirun = run_pi(problem)
    write_solution(out, problem, pirun)
    extra = []
    if name == "lq":
        scalar = build_lq_example()
        srun = run_pi(scalar)
        p_star = value_iteration_oracle(scalar).P
        err = float(np.linalg.norm(srun.final_value.P - p_star, 2))
        err2 = float(np.linalg.norm(pirun.final_value.P - value_iteration_oracle(problem).P, 2))
        print(f"scalar LQ (gamma={scalar.gamma}): |P_PI - P_Riccati| = {err:.3g}")
        print(f"two-state LQ (gamma={gamma}): |P_PI - P_Riccati| = {err2:.3g}")
        extra.append(CheckResult("riccati-agreement-scalar", err <= 1e-8, 1e-8 - err,
                                 None if err <= 1e-8 else {"error": err}, 1, 1e-8, gamma=scalar.gamma))
    code = run_verify(problem, pirun, bundle, out, args)
    if extra:
        rep = json.loads((out / "report.json").read_text())
        for c in extra:
            print_report(VerificationReport([c]))
            rep["checks"].append(c.to_dict())
            if c.counts_as_failure:
                rep["passed"] = False
                code = EXIT_VERIFY
        write_json(out / "report.json", rep)
    return code


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "verify": cmd_verify, "reproduce": cmd_reproduce}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "horizon", 1) < 1:
        parser.error("--horizon must be at least 1")
    if getattr(args, "tol", 1.0) <= 0:
        parser.error("--tol must be positive")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except PICertifyError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``certify``, ``solve`` and ``oracle-test``.

Exit codes
----------
0 success, 1 parse error, 2 certification failure, 3 non-convergence,
4 audit failure, 5 oracle mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import majorant as mj
from .cone import ConeSpec
from .minnorm import (Infeasible, LinearInclusion, MinNormError, brute_force_min_norm,
                      random_instance, solve_min_norm)
from .newton import (CertificationError, OracleError, ProblemSpec, ResidualMode, RunReport,
                     SolverConfig, Status, audit, certify, newton_solve)
from .problems import BUILTINS, PolynomialSystem, builtin, problem_from_polynomials

EXIT_OK, EXIT_PARSE, EXIT_CERT, EXIT_NOCONV, EXIT_AUDIT, EXIT_ORACLE = range(6)

TRACE_COLUMNS = ("k", "residual_norm", "step_norm", "dist_from_start", "theta_k",
                 "r_norm_plus", "r_norm_minus", "fc_bound", "t_k", "eps_k")

ORACLE_TOL = 1e-7


class ProblemFileError(ValueError):
    """Malformed problem file; the message carries the offending line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- problem files

def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return 1


def _parse_terms(raw, where: str):
    terms = []
    for t in raw:
        if isinstance(t, dict):
            coef, exps = t.get("coef"), t.get("exps")
        elif isinstance(t, (list, tuple)) and len(t) == 2:
            coef, exps = t
        else:
            raise ValueError(f"{where}: term {t!r} is neither {{coef, exps}} nor [coef, exps]")
        if not isinstance(coef, (int, float)) or not isinstance(exps, list):
            raise ValueError(f"{where}: bad term {t!r}")
        terms.append((float(coef), tuple(exps)))
    return terms


def parse_problem_text(text: str, source: str = "<string>") -> ProblemSpec:
    """Build a :class:`ProblemSpec` from a JSON problem document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ProblemFileError(f"{source}:1: top level must be an object")

    def fail(key, msg):
        raise ProblemFileError(f"{source}:{_line_of(text, key)}: {msg}")

    for key in ("n", "m", "cone", "x0", "polynomials"):
        if key not in doc:
            fail(key, f"missing field {key!r}")
    n, m = doc["n"], doc["m"]
    if not isinstance(n, int) or n < 1:
        fail("n", f"n must be a positive integer, got {n!r}")
    if not isinstance(m, int) or m < 1:
        fail("m", f"m must be a positive integer, got {m!r}")
    try:
        cone = ConeSpec(doc["cone"])
    except (ValueError, TypeError) as exc:
        fail("cone", f"bad cone: {exc}")
    if cone.m != m:
        fail("cone", f"cone has {cone.m} tags but m={m}")
    x0 = doc["x0"]
    if not isinstance(x0, list) or len(x0) != n:
        fail("x0", f"x0 must list {n} numbers")
    polys = doc["polynomials"]
    if not isinstance(polys, list) or len(polys) != m:
        fail("polynomials", f"expected {m} polynomials, got {len(polys) if isinstance(polys, list) else polys!r}")
    try:
        system = PolynomialSystem(n, [_parse_terms(p, f"polynomial {i}") for i, p in enumerate(polys)])
    except (ValueError, TypeError) as exc:
        fail("polynomials", str(exc))
    opt = {}
    for key in ("lipschitz_L", "smale_gamma", "domain_radius"):
        val = doc.get(key)
        if val is not None and (not isinstance(val, (int, float)) or val <= 0):
            fail(key, f"{key} must be a positive number")
        opt[key] = None if val is None else float(val)
    return problem_from_polynomials(system, cone, x0, name=str(doc.get("name", Path(source).stem)), **opt)


def load_problem(ref: str) -> ProblemSpec:
    """A builtin name or the path of a JSON problem file."""
    if ref in BUILTINS:
        return builtin(ref)
    path = Path(ref)
    if not path.is_file():
        raise ProblemFileError(f"{ref}: not a builtin ({', '.join(BUILTINS)}) and no such file")
    return parse_problem_text(path.read_text(), str(path))


# ---------------------------------------------------------------- traces

def trace_rows(report: RunReport, theta: float) -> list[dict]:
    cert = report.certificate
    seq = cert.sequence if cert is not None else None
    rows = []
    for rec in report.trace:
        fc = cert.fc_bound(rec.k, theta) if cert is not None else math.nan
        t_k = seq.t[rec.k] if seq is not None and rec.k < len(seq) else math.nan
        e_k = seq.eps[rec.k] if seq is not None and rec.k < len(seq) else math.nan
        rows.append(dict(zip(TRACE_COLUMNS, (
            rec.k, rec.residual_norm, rec.step_norm, rec.dist_from_start, rec.theta_k,
            rec.r_tplus_norm, rec.r_tminus_norm, fc, t_k, e_k))))
    return rows


def write_trace(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rows:
            w.writerow([str(row["k"])] + [_fmt(row[c]) for c in TRACE_COLUMNS[1:]])


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [{c: (int(r[c]) if c == "k" else float(r[c])) for c in TRACE_COLUMNS} for r in reader]


# ---------------------------------------------------------------- commands

def _certify_or_report(problem, rho, variant, theta=None):
    try:
        return certify(problem, rho=rho, variant=variant, theta=theta), None
    except CertificationError as exc:
        lines = [f"certification failed: {exc}"]
        lines += [f"  {k}={_fmt(v) if isinstance(v, float) else v}" for k, v in exc.measured.items()]
        return None, "\n".join(lines)


def cmd_certify(args) -> int:
    problem = load_problem(args.problem)
    cert, err = _certify_or_report(problem, args.rho, args.variant)
    if cert is None:
        print(err, file=sys.stderr)
        return EXIT_CERT
    c, cp = cert.constants, cert.critical
    print(f"problem={problem.name}")
    print(f"variant={cert.variant}")
    print(f"rho={c.rho:.12g}")
    for label, val in (("b", cert.b), ("t_star", cp.t_star), ("t_bar", cp.t_bar),
                       ("beta", cp.beta), ("kappa", c.kappa), ("lambda", c.lambda_radius),
                       ("theta_tilde", c.theta_tilde), ("q_linear_threshold", c.q_linear_threshold)):
        print(f"{label}={val:.12g}")
    for w in cert.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    z0 = None
    if args.start is not None:
        z0 = np.array([float(v) for v in args.start.split(",")])
        if z0.shape[0] != problem.n:
            print(f"--start needs {problem.n} comma-separated values", file=sys.stderr)
            return EXIT_PARSE
    config = SolverConfig(theta=args.theta, theta_decay=args.theta_decay, residual_mode=args.mode,
                          tol=args.tol, max_iter=args.max_iter, rho=args.rho, seed=args.seed, z0=z0)
    cert, err = _certify_or_report(problem, args.rho, args.variant, theta=args.theta)
    if cert is None:
        print(err, file=sys.stderr)
        if args.audit:
            return EXIT_CERT
    try:
        report = newton_solve(problem, config)
    except OracleError as exc:
        print(f"residual oracle failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    report.certificate = cert

    print(f"problem={problem.name}")
    print(f"status={report.status.value}")
    print(f"iterations={max(len(report.trace) - 1, 0)}")
    print("x=" + ",".join(_fmt(v) for v in report.x))
    if report.trace:
        print(f"residual_norm={_fmt(report.trace[-1].residual_norm)}")
    if report.failed_at is not None:
        print(f"failed_at={report.failed_at}")
    if args.trace:
        write_trace(args.trace, trace_rows(report, args.theta))

    audit_ok = True
    if args.audit and report.trace:
        report.audit = audit(report, cert, args.theta)
        audit_ok = report.audit_passed()
        print(f"{'check':<12} {'k':>4} {'lhs':>24} {'rhs':>24}  result")
        for chk in report.audit:
            tag = "SKIP" if chk.skipped else ("info" if chk.advisory else ("pass" if chk.passed else "FAIL"))
            print(f"{chk.name:<12} {chk.k:>4} {_fmt(chk.lhs):>24} {_fmt(chk.rhs):>24}  {tag}"
                  + (f"  ({chk.note})" if chk.note and not chk.advisory else ""))
        print(f"audit={'pass' if audit_ok else 'fail'}")
    if report.status is not Status.CONVERGED:
        return EXIT_NOCONV
    return EXIT_OK if audit_ok else EXIT_AUDIT


def _fixed_infeasible() -> LinearInclusion:
    return LinearInclusion(np.zeros((1, 1)), np.array([1.0]), ConeSpec(["zero"]))


def oracle_deviation(inc: LinearInclusion, inject_fault: bool = False) -> tuple[float, bool]:
    """Norm and step disagreement between the QP solver and brute force.

    Returns the deviation (``inf`` if only one side reports infeasibility)
    and whether the QP solver found the instance infeasible.
    """
    try:
        ref = brute_force_min_norm(inc)
    except Infeasible:
        ref = None
    try:
        sol = solve_min_norm(inc)
    except Infeasible:
        sol = None
    if (ref is None) != (sol is None):
        return math.inf, sol is None
    if ref is None:
        return 0.0, True
    d = sol.d + (1e-3 if inject_fault else 0.0)
    return max(abs(float(np.linalg.norm(d)) - ref.norm), float(np.max(np.abs(d - ref.d)))), False


def cmd_oracle_test(args) -> int:
    rng = np.random.default_rng(args.seed)
    instances = [_fixed_infeasible()] if args.plant_infeasible else []
    while len(instances) < args.instances:
        instances.append(random_instance(rng))
    worst, n_infeasible = 0.0, 0
    for inc in instances:
        try:
            dev, infeasible = oracle_deviation(inc, args.inject_fault)
        except MinNormError as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            dev, infeasible = math.inf, False
        n_infeasible += infeasible
        worst = max(worst, dev)
    print(f"instances={len(instances)}")
    print(f"infeasible={n_infeasible}")
    print(f"max_deviation={_fmt(worst)}")
    ok = worst <= ORACLE_TOL
    print(f"oracle={'agree' if ok else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_ORACLE


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="conewton", description="Inexact Newton solver for cone inclusions F(x) in C.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("certify", help="compute convergence constants at x0")
    c.add_argument("problem", help=f"builtin ({', '.join(BUILTINS)}) or JSON problem file")
    c.add_argument("--rho", type=float, default=0.0)
    c.add_argument("--variant", choices=(mj.LIPSCHITZ, mj.SMALE))
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("solve", help="run the inexact Newton iteration")
    s.add_argument("problem", help=f"builtin ({', '.join(BUILTINS)}) or JSON problem file")
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--theta-decay", type=float, default=1.0)
    s.add_argument("--mode", choices=[m.value for m in ResidualMode], default=ResidualMode.ZERO.value)
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--rho", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--start", help="comma-separated start point within rho of x0")
    s.add_argument("--variant", choices=(mj.LIPSCHITZ, mj.SMALE))
    s.add_argument("--trace", metavar="CSV", help="write the iteration trace here")
    s.add_argument("--audit", action="store_true", help="check every certified bound")
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("oracle-test", help="compare the QP solver with brute-force enumeration")
    o.add_argument("--instances", type=int, default=200)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--plant-infeasible", action="store_true",
                   help="include a fixed infeasible instance")
    o.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    o.set_defaults(func=cmd_oracle_test)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "oracle-test" and args.instances < 1:
            parser.error("--instances must be at least 1")
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ProblemFileError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

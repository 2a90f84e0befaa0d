"""Acceptance criteria, each run at its stated tolerance.

A summary line per criterion is printed at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from conewton import majorant as mj
from conewton.cone import ConeSpec
from conewton.minnorm import (Infeasible, brute_force_min_norm, random_instance, robinson_check,
                              solve_min_norm, t_inverse_norm_at)
from conewton.newton import (CertificationError, ProblemSpec, SolverConfig, Status, audit, certify,
                             error_ratios, lin_error_vector, newton_solve, run)
from conewton.problems import builtin

criterion = pytest.mark.criterion
SQRT2 = math.sqrt(2.0)


def _admissible_models(rng, n):
    out = []
    for _ in range(n):
        L = float(rng.uniform(0.1, 5.0))
        out.append(mj.MajorantModel.lipschitz(float(rng.uniform(0.01, 0.98)) / (2 * L), L))
        gamma = float(rng.uniform(0.1, 5.0))
        out.append(mj.MajorantModel.smale(float(rng.uniform(0.01, 0.98)) * mj.SMALE_BOUND / gamma, gamma))
    return out


def _closed_forms(model):
    if model.variant == mj.LIPSCHITZ:
        s = math.sqrt(2 * model.b * model.L)
        return 1 - s, s / model.L, (1 - s) / (1 + s)
    gb = model.gamma * model.b
    tt = (1 - 2 * math.sqrt(gb) - gb) / (1 + 2 * math.sqrt(gb) + gb)
    return 2 * tt / (1 + tt), model.b / (math.sqrt(gb) + gb), tt


@criterion("1", "certificate regression and closed-form agreement")
def test_criterion_1_certificate_regression():
    t0 = time.perf_counter()
    p = builtin("quad1d")
    lip = certify(p, variant=mj.LIPSCHITZ)
    c = lip.constants
    assert abs(lip.b - 0.083333333333) < 1e-9
    assert abs(c.kappa - 0.666666666667) < 1e-9
    assert abs(c.lambda_radius - 0.5) < 1e-9
    assert abs(c.theta_tilde - 0.5) < 1e-9
    sm = certify(p, variant=mj.SMALE).constants
    assert abs(sm.lambda_radius - 0.428571428571) < 1e-9
    assert abs(sm.theta_tilde - 0.469387755102) < 1e-9

    rng = np.random.default_rng(1)
    for model in _admissible_models(rng, 100):
        got = mj.constants(model)
        kappa, lam, tt = _closed_forms(model)
        assert abs(got.kappa - kappa) < 1e-9
        assert abs(got.lambda_radius - lam) < 1e-9
        assert abs(got.theta_tilde - tt) < 1e-9
    assert time.perf_counter() - t0 < 1.0


# ---------------------------------------------------------------- criteria 2 and 3 share runs

SEEDS = range(10)
SLACK = 1e-12


def _sweep():
    """Every (problem, rho, theta, seed) run of the FC and majorization criteria."""
    cells = []
    for name in ("quad1d", "ineq2"):
        p = builtin(name)
        beta = certify(p).critical.beta
        for rho in (0.0, 0.4 * beta / 2):
            tt = certify(p, rho=rho).constants.theta_tilde
            for theta in (0.0, 0.1, tt / 2, tt):
                try:
                    cert = certify(p, rho=rho, theta=theta)
                except CertificationError:
                    cert = None
                for seed in SEEDS:
                    rng = np.random.default_rng(1000 + seed)
                    z0 = p.x0 + (0.9 * rho * rng.uniform(-1, 1, p.n) / math.sqrt(p.n) if rho else 0.0)
                    cfg = SolverConfig(theta=theta, residual_mode="scaled-random", seed=seed,
                                       rho=rho, z0=z0)
                    cells.append((name, rho, theta, cert, newton_solve(p, cfg)))
    return cells


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    cells = _sweep()
    return cells, time.perf_counter() - t0


def _fc_bound(p, rho, theta, k):
    b = certify(p).b
    return ((1 + theta ** 2) / 2) ** k * (b + 2 * rho)


@criterion("2", "FC residual bound on quad1d and ineq2")
def test_criterion_2_fc_bound(sweep, record_property):
    cells, elapsed = sweep
    uncertified = set()
    for name, rho, theta, cert, rep in cells:
        assert rep.status is Status.CONVERGED
        p = builtin(name)
        if cert is None:
            uncertified.add((name, round(rho, 6), theta))
        for rec in rep.trace:
            assert rec.residual_norm <= _fc_bound(p, rho, theta, rec.k) + SLACK, (name, rho, theta, rec.k)
    assert elapsed < 5.0
    if uncertified:
        record_property("note", "FC also holds where theta exceeds the certified tolerance: "
                        + ", ".join(f"{n} rho={r} theta={t}" for n, r, t in sorted(uncertified)))


@criterion("3", "step majorization, containment and quadratic tightness")
def test_criterion_3_majorization(sweep, record_property):
    cells, _ = sweep
    n_step = n_na = 0
    for name, rho, theta, cert, rep in cells:
        p = builtin(name)
        certified = cert if cert is not None else certify(p, rho=rho)
        lam = certified.constants.lambda_radius
        # the smaller radius from sup{t >= rho : kappa + f'(t) < 0} - rho
        f = certified.model
        kappa = certified.constants.kappa
        lam_f = mj.critical_points(f).t_bar
        lo, hi = rho, lam_f
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if kappa + f.fprime(mid) < 0 else (lo, mid)
        lam_f = lo - rho
        for rec in rep.trace:
            assert rec.dist_from_start < lam
            assert rec.dist_from_start < lam_f
        if cert is None:
            n_na += 1
            continue
        seq = cert.sequence
        for rec in rep.trace[:-1]:
            assert rec.k + 1 < len(seq), "majorant sequence shorter than the run"
            assert rec.step_norm <= seq.t[rec.k + 1] - seq.t[rec.k] + SLACK
            n_step += 1

    rep = run(builtin("quad1d"), SolverConfig(theta=0.0))
    seq = rep.certificate.sequence
    for rec in rep.trace[:-1]:
        assert abs(rec.step_norm - (seq.t[rec.k + 1] - seq.t[rec.k])) <= 1e-10
    if n_na:
        record_property("note", f"step bound not applicable to {n_na} uncertified runs; "
                        f"{n_step} step checks passed")


@criterion("4", "exact mode reproduces classical Newton")
def test_criterion_4_exact_mode():
    F = lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 4.0, x[0] - x[1] ** 3])
    J = lambda x: np.array([[2 * x[0], 2 * x[1]], [1.0, -3 * x[1] ** 2]])
    sq = ProblemSpec(n=2, m=2, F=F, J=J, cone=ConeSpec(["zero", "zero"]), x0=[1.5, 1.2])
    for p in (sq, builtin("quad1d")):
        rep = newton_solve(p, SolverConfig(theta=0.0))
        for rec in rep.trace[:-1]:
            classical = -np.linalg.solve(p.jacobian(rec.x), p.residual(rec.x))
            assert np.max(np.abs(rec.d - classical)) <= 1e-12

    rep = newton_solve(builtin("quad1d"), SolverConfig(theta=0.0, tol=1e-12))
    assert abs(rep.x[0] - SQRT2) <= 1e-10
    assert len(rep.trace) - 1 <= 8
    errs = [abs(rec.x[0] - SQRT2) for rec in rep.trace]
    pairs = [(a, b) for a, b in zip(errs, errs[1:]) if b > 1e-14]
    assert len(pairs) >= 3
    for a, b in pairs[-3:]:
        assert b / a ** 2 <= 0.5


@criterion("5", "min-norm solver agrees with brute-force enumeration")
def test_criterion_5_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    for _ in range(200):
        inc = random_instance(rng)
        try:
            ref = brute_force_min_norm(inc)
        except Infeasible:
            ref = None
        try:
            sol = solve_min_norm(inc)
        except Infeasible:
            sol = None
        assert (ref is None) == (sol is None)
        if sol is None:
            continue
        assert abs(sol.norm - ref.norm) <= 1e-7
        assert np.max(np.abs(sol.d - ref.d)) <= 1e-6
        assert sol.kkt_residual <= 1e-8
    assert time.perf_counter() - t0 < 10.0


def _ball(rng, center, radius):
    u = rng.standard_normal(center.shape[0])
    return center + radius * rng.uniform() * u / np.linalg.norm(u)


def _unit(rng, n):
    u = rng.standard_normal(n)
    return u / np.linalg.norm(u)


@criterion("6", "sampled property suites for the majorant and inner-norm bounds")
def test_criterion_6_property_suites():
    N, TOL = 100, 1e-9
    rng = np.random.default_rng(6)

    for model in (mj.MajorantModel.lipschitz(1 / 12, 2 / 3), mj.MajorantModel.smale(1 / 12, 1 / 3)):
        c = mj.constants(model)
        n = 0
        while n < N:
            t = float(rng.uniform(0, c.lambda_radius))
            eps = float(rng.uniform(0, c.kappa * t))
            if not mj.in_region_A(model, t, eps):
                continue
            theta = float(rng.uniform(0, c.theta_tilde))
            tp, ep = mj.n_theta(model, t, eps, theta)
            assert tp > t and ep >= eps and mj.in_region_A(model, tp, ep, tol=TOL)
            assert model.f(tp) + ep <= (1 + theta ** 2) / 2 * (model.f(t) + eps) + TOL
            n += 1
        n = 0
        while n < N:
            t, s = rng.uniform(0, model.R, 2)
            if t + s >= model.R:
                continue
            b, a = rng.uniform(0, t), rng.uniform(0, s)
            rhs = max(mj.lin_error_scalar(model, t + s, t),
                      0.5 * (model.fprime(t + s) - model.fprime(t)) / s * a * a)
            assert mj.lin_error_scalar(model, a + b, b) <= rhs + TOL
            n += 1

    for name in ("quad1d", "ineq2"):
        p = builtin(name)
        f = certify(p, variant=mj.LIPSCHITZ).model
        t_bar = mj.critical_points(f).t_bar
        A0 = p.jacobian(p.x0)
        for _ in range(N):
            t = float(rng.uniform(0, 0.999 * t_bar))
            x = _ball(rng, p.x0, t)
            u = _unit(rng, p.n)
            assert t_inverse_norm_at(p.jacobian(x), A0 @ u, p.cone) <= -1 / f.fprime(t) + TOL
            assert t_inverse_norm_at(A0, p.jacobian(x) @ u, p.cone) <= 2 + f.fprime(t) + TOL
        n = 0
        while n < N:
            a, b = rng.uniform(0, f.R, 2)
            if a + b >= f.R:
                continue
            x = _ball(rng, p.x0, a)
            y = _ball(rng, x, b)
            da, db = np.linalg.norm(x - p.x0), np.linalg.norm(y - x)
            bound = mj.lin_error_scalar(f, da + db, da)
            E = lin_error_vector(p, y, x)
            assert t_inverse_norm_at(A0, E, p.cone) <= bound + TOL
            assert t_inverse_norm_at(A0, -E, p.cone) <= bound + TOL
            n += 1
        for _ in range(N):
            y = _ball(rng, p.x0, 0.9 * f.R)
            r = float(np.linalg.norm(y - p.x0))
            assert t_inverse_norm_at(A0, -p.residual(y), p.cone) <= f.f(r) + 2 * r + TOL

    for _ in range(N):
        inc = random_instance(rng)
        w = rng.standard_normal(inc.cone.m)
        s = float(rng.uniform(0.01, 100))
        base = t_inverse_norm_at(inc.A, w, inc.cone)
        scaled = t_inverse_norm_at(inc.A, s * w, inc.cone)
        if math.isinf(base):
            assert math.isinf(scaled)
        else:
            assert abs(scaled - s * base) <= TOL * max(1.0, s * base)


@criterion("7", "superlinear rate with a decaying tolerance")
def test_criterion_7_superlinear():
    p = builtin("quad1d")
    tt = certify(p).constants.theta_tilde
    rep = newton_solve(p, SolverConfig(theta=tt, theta_decay=0.5, residual_mode="boundary"))
    assert rep.status is Status.CONVERGED
    ratios = error_ratios([rec.x for rec in rep.trace], np.array([SQRT2]))
    assert len(ratios) >= 7
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[6] < 0.1


@criterion("8", "contraction audit values and corrupted-trace detection")
def test_criterion_8_slc_audit(record_property):
    rep = run(builtin("quad1d"), SolverConfig(theta=0.0))
    slc = {c.k: c for c in rep.audit if c.name == "slc"}
    assert abs(slc[1].lhs - 0.0024510) <= 1e-6
    assert abs(slc[1].rhs - 0.0034722) <= 1e-6
    assert slc[1].passed and rep.audit_passed()

    theta = 0.5
    rep = run(builtin("quad1d"), SolverConfig(theta=theta, residual_mode="boundary"), with_audit=False)
    assert not [c for c in audit(rep, rep.certificate, theta) if not (c.passed or c.advisory or c.skipped)]
    rep.trace[2].residual_norm *= 10
    flagged = [(c.name, c.k) for c in audit(rep, rep.certificate, theta)
               if not (c.passed or c.advisory or c.skipped)]
    assert flagged == [("fc", 2)]
    record_property("note", "corruption injected into a theta=0.5 boundary-mode trace")


@criterion("9", "Robinson failures")
def test_criterion_9_robinson():
    F = lambda x: np.array([x[0] - 1.0, 1.0])
    J = lambda x: np.array([[1.0], [0.0]])
    p = ProblemSpec(n=1, m=2, F=F, J=J, cone=ConeSpec(["zero", "zero"]), x0=[0.0])
    rep = newton_solve(p, SolverConfig())
    assert rep.status is Status.ROBINSON_FAIL and rep.trace == []

    assert robinson_check(np.eye(3), ConeSpec(["zero", "nonpos", "free"])) is True
    assert robinson_check([[0.0]], ConeSpec(["zero"])) is False
    assert robinson_check([[1.0, 0.0], [0.0, 0.0]], ConeSpec(["zero", "nonpos"])) is False

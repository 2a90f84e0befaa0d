"""Inexact Newton iteration for ``F(x) in C`` with certification and audit.

Each step takes the minimal-norm ``d`` with ``F(x) + F'(x) d + r in C``,
where the injected residual ``r`` is admissible when

    max(||T^{-1}(r)||, ||T^{-1}(-r)||) <= theta * ||T^{-1}(-F(x))||

and ``T^{-1}(w) = {d : F'(z0) d - w in C}`` is taken at the start point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import majorant as mj
from .cone import ConeSpec, contains
from .minnorm import Infeasible, LinearInclusion, robinson_check, solve_min_norm, t_inverse_norm_at

log = logging.getLogger(__name__)

SLACK = 1e-12
_ORACLE_RETRIES = 64


class ResidualMode(str, Enum):
    ZERO = "zero"
    SCALED_RANDOM = "scaled-random"
    BOUNDARY = "boundary"


class Status(str, Enum):
    CONVERGED = "CONVERGED"
    MAX_ITER = "MAX_ITER"
    ROBINSON_FAIL = "ROBINSON_FAIL"
    INFEASIBLE_STEP = "INFEASIBLE_STEP"


class OracleError(RuntimeError):
    """No admissible residual direction could be drawn."""


class CertificationError(ValueError):
    """The problem data does not admit a convergence certificate."""

    def __init__(self, message: str, measured: dict | None = None):
        super().__init__(message)
        self.measured = dict(measured or {})


@dataclass
class ProblemSpec:
    """A cone-inclusion problem ``F(x) in C`` around a reference point ``x0``."""

    n: int
    m: int
    F: Callable[[np.ndarray], np.ndarray]
    J: Callable[[np.ndarray], np.ndarray]
    cone: ConeSpec
    x0: np.ndarray
    lipschitz_L: float | None = None
    smale_gamma: float | None = None
    domain_radius: float | None = None
    name: str = "problem"
    default_variant: str | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.x0.shape[0] != self.n:
            raise ValueError(f"x0 has {self.x0.shape[0]} entries, expected n={self.n}")
        if self.cone.m != self.m:
            raise ValueError(f"cone has {self.cone.m} coordinates, expected m={self.m}")

    def residual(self, x) -> np.ndarray:
        return np.asarray(self.F(np.asarray(x, dtype=float)), dtype=float).reshape(self.m)

    def jacobian(self, x) -> np.ndarray:
        return np.asarray(self.J(np.asarray(x, dtype=float)), dtype=float).reshape(self.m, self.n)

    def variant(self) -> str:
        if self.default_variant:
            return self.default_variant
        if self.lipschitz_L is not None:
            return mj.LIPSCHITZ
        if self.smale_gamma is not None:
            return mj.SMALE
        raise CertificationError(f"{self.name}: neither a Lipschitz nor a Smale constant is set")


@dataclass
class SolverConfig:
    theta: float = 0.0
    theta_decay: float = 1.0
    residual_mode: ResidualMode = ResidualMode.ZERO
    tol: float = 1e-12
    max_iter: int = 100
    rho: float = 0.0
    seed: int = 0
    z0: np.ndarray | None = None

    def __post_init__(self):
        self.residual_mode = ResidualMode(self.residual_mode)
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")
        if not 0.0 < self.theta_decay <= 1.0:
            raise ValueError("theta_decay must lie in (0, 1]")

    def theta_at(self, k: int) -> float:
        return self.theta * self.theta_decay ** k


@dataclass
class IterationRecord:
    k: int
    x: np.ndarray
    residual_norm: float
    theta_k: float
    r: np.ndarray
    r_tminus_norm: float
    r_tplus_norm: float
    d: np.ndarray | None
    step_norm: float
    dist_from_start: float


@dataclass
class Certificate:
    variant: str
    base_point: np.ndarray
    b: float
    b_measured: float
    kh_holds: bool
    model: mj.MajorantModel
    shifted: object
    critical: mj.CriticalPoints
    constants: mj.ConvergenceConstants
    sequence: mj.MajorantSequence | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def rho(self) -> float:
        return self.constants.rho

    def fc_bound(self, k: int, theta: float) -> float:
        return ((1.0 + theta * theta) / 2.0) ** k * (self.model.b + 2.0 * self.rho)


@dataclass
class BoundCheck:
    name: str
    k: int
    lhs: float
    rhs: float
    passed: bool
    advisory: bool = False
    skipped: bool = False
    note: str = ""

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass
class RunReport:
    status: Status
    trace: list[IterationRecord]
    z0: np.ndarray
    failed_at: int | None = None
    certificate: Certificate | None = None
    audit: list[BoundCheck] | None = None

    @property
    def x(self) -> np.ndarray:
        return self.trace[-1].x if self.trace else self.z0

    def audit_passed(self) -> bool:
        return all(c.passed for c in (self.audit or []) if not (c.advisory or c.skipped))


def _draw_residual(A0, cone, residual_norm, theta_k, mode, rng) -> np.ndarray:
    m = cone.m
    if theta_k == 0.0 or residual_norm == 0.0 or mode is ResidualMode.ZERO:
        return np.zeros(m)
    for attempt in range(_ORACLE_RETRIES):
        if mode is ResidualMode.BOUNDARY:
            u = np.ones(m) / math.sqrt(m)
        else:
            u = rng.standard_normal(m)
            u /= np.linalg.norm(u)
        nu = max(t_inverse_norm_at(A0, u, cone), t_inverse_norm_at(A0, -u, cone))
        if math.isfinite(nu) and nu > 0.0:
            # homogeneity of the inverse process makes the tolerance tight
            return (theta_k * residual_norm / nu) * u
        if mode is ResidualMode.BOUNDARY:
            break
    raise OracleError(f"no admissible residual direction for mode {mode.value}")


def residual_oracle(problem: ProblemSpec, x, theta_k: float, mode, rng,
                    base_point=None) -> np.ndarray:
    """Injected residual ``r`` meeting the relative tolerance with equality.

    Inner norms are measured at ``base_point`` (``problem.x0`` by default).
    """
    base = problem.x0 if base_point is None else np.asarray(base_point, dtype=float)
    A0 = problem.jacobian(base)
    res = t_inverse_norm_at(A0, -problem.residual(x), problem.cone)
    return _draw_residual(A0, problem.cone, res, theta_k, ResidualMode(mode), rng)


def newton_solve(problem: ProblemSpec, config: SolverConfig) -> RunReport:
    """Run the inexact Newton iteration from ``config.z0`` (``x0`` by default).

    Terminates once the inner-norm residual drops to ``tol`` or ``F(x_k)``
    lies in the cone within ``tol``.
    """
    cone = problem.cone
    z0 = problem.x0.copy() if config.z0 is None else np.asarray(config.z0, dtype=float).reshape(-1)
    if config.rho > 0 and not np.linalg.norm(z0 - problem.x0) < config.rho:
        raise ValueError("start point must lie within rho of x0")
    A0 = problem.jacobian(z0)
    if not robinson_check(A0, cone):
        return RunReport(Status.ROBINSON_FAIL, [], z0, failed_at=0)

    rng = np.random.default_rng(config.seed)
    trace: list[IterationRecord] = []
    x = z0.copy()
    for k in range(config.max_iter + 1):
        Fx = problem.residual(x)
        res = t_inverse_norm_at(A0, -Fx, cone)
        dist = float(np.linalg.norm(x - z0))
        theta_k = config.theta_at(k)
        done = res <= config.tol or contains(cone, Fx, config.tol)
        if done or k == config.max_iter:
            trace.append(IterationRecord(k, x, res, theta_k, np.zeros(cone.m), 0.0, 0.0,
                                         None, math.nan, dist))
            status = Status.CONVERGED if done else Status.MAX_ITER
            return RunReport(status, trace, z0)
        r = _draw_residual(A0, cone, res, theta_k, config.residual_mode, rng)
        try:
            step = solve_min_norm(LinearInclusion(problem.jacobian(x), Fx + r, cone))
        except Infeasible:
            trace.append(IterationRecord(k, x, res, theta_k, r, math.nan, math.nan,
                                         None, math.nan, dist))
            return RunReport(Status.INFEASIBLE_STEP, trace, z0, failed_at=k)
        r_minus = t_inverse_norm_at(A0, -r, cone)
        r_plus = t_inverse_norm_at(A0, r, cone)
        trace.append(IterationRecord(k, x, res, theta_k, r, r_minus, r_plus,
                                     step.d, step.norm, dist))
        log.debug("k=%d res=%.3e step=%.3e", k, res, step.norm)
        x = x + step.d
    raise AssertionError("unreachable")


def certify(problem: ProblemSpec, rho: float = 0.0, variant: str | None = None,
            theta: float | None = None, b: float | None = None,
            k_max: int = 500) -> Certificate:
    """Build the convergence certificate at ``problem.x0``.

    ``b`` is measured as ``||T^{-1}[-F(x0)]||`` so that the initial
    hypothesis holds with equality; an override is accepted only if it is
    not smaller than the measured value.
    """
    variant = variant or problem.variant()
    A0 = problem.jacobian(problem.x0)
    if not robinson_check(A0, problem.cone):
        raise CertificationError(f"{problem.name}: Robinson condition fails at x0")
    b_measured = t_inverse_norm_at(A0, -problem.residual(problem.x0), problem.cone)
    b_used = b_measured if b is None else float(b)
    if b_used < b_measured:
        raise CertificationError("b override is below the measured residual",
                                 {"b": b_used, "b_measured": b_measured})
    measured = {"b": b_used, "b_measured": b_measured}
    if b_used == 0.0:
        raise CertificationError("x0 already solves the inclusion; nothing to certify", measured)
    try:
        if variant == mj.LIPSCHITZ:
            if problem.lipschitz_L is None:
                raise CertificationError(f"{problem.name}: no Lipschitz constant", measured)
            measured["L"] = problem.lipschitz_L
            measured["2bL"] = 2 * b_used * problem.lipschitz_L
            model = mj.MajorantModel.lipschitz(b_used, problem.lipschitz_L)
        elif variant == mj.SMALE:
            if problem.smale_gamma is None:
                raise CertificationError(f"{problem.name}: no Smale constant", measured)
            measured["gamma"] = problem.smale_gamma
            measured["b*gamma"] = b_used * problem.smale_gamma
            model = mj.MajorantModel.smale(b_used, problem.smale_gamma)
        else:
            raise CertificationError(f"unknown variant {variant!r}", measured)
    except mj.NoRootError as exc:
        raise CertificationError(str(exc), measured) from exc

    warnings = []
    if model.boundary:
        warnings.append("model sits on its admissibility bound: only exact steps (theta=0) are certified")
        if rho:
            raise CertificationError("rho must be zero on the admissibility bound", measured)
    try:
        shifted = mj.shift(model, rho)
        consts = mj.constants(model, rho)
    except mj.PreconditionError as exc:
        raise CertificationError(str(exc), measured) from exc
    cert = Certificate(variant, problem.x0.copy(), b_used, b_measured, b_used >= b_measured,
                       model, shifted, mj.critical_points(model), consts, warnings=warnings)
    if theta is not None:
        if theta > consts.theta_tilde * (1 + 1e-15):
            measured.update(theta=theta, theta_tilde=consts.theta_tilde)
            raise CertificationError(
                f"theta={theta} exceeds the certified tolerance {consts.theta_tilde:.12g}", measured)
        cert.sequence = mj.majorant_sequence(shifted, theta, k_max)
    return cert


def audit(report: RunReport, certificate: Certificate, theta: float) -> list[BoundCheck]:
    """Compare a finished run against every bound the certificate promises.

    Checks, per iteration ``k``: the residual decay bound, step
    majorization by the scalar sequence, containment in the certified ball,
    the two-step contraction inequality (when the radius leaves room inside
    the domain) and, informationally, the asymptotic Q-linear ratio.
    """
    if certificate is None:
        raise ValueError("audit needs a certificate")
    if not report.trace:
        raise ValueError("audit needs a nonempty trace")
    c = certificate.constants
    g = certificate.shifted
    f = certificate.model
    rho = c.rho
    seq = certificate.sequence
    if seq is None or seq.theta != theta or len(seq) < len(report.trace) + 1:
        seq = mj.majorant_sequence(g, theta, len(report.trace) + 1)
    checks: list[BoundCheck] = []
    trace = report.trace

    for rec in trace:
        rhs = certificate.fc_bound(rec.k, theta)
        checks.append(BoundCheck("fc", rec.k, rec.residual_norm, rhs,
                                 rec.residual_norm <= rhs + SLACK))

    for rec in trace:
        if rec.d is None:
            continue
        if rec.k + 1 < len(seq):
            rhs = seq.t[rec.k + 1] - seq.t[rec.k]
            checks.append(BoundCheck("step", rec.k, rec.step_norm, rhs,
                                     rec.step_norm <= rhs + SLACK))
        else:
            checks.append(BoundCheck("step", rec.k, rec.step_norm, math.nan, True, skipped=True,
                                     note="majorant sequence exhausted"))

    for rec in trace:
        checks.append(BoundCheck("containment", rec.k, rec.dist_from_start, c.lambda_radius,
                                 rec.dist_from_start < c.lambda_radius))

    if c.h5:
        lp = c.lambda_point
        _, fp_l, d2_l = f.eval(lp)
        fp_rho = abs(f.eval(rho)[1])
        a = (1 + theta) / 2 * d2_l / abs(fp_l)
        bcoef = theta * (2 * fp_rho + fp_l) / abs(fp_l)
        pref = (1 + theta) / (1 - theta)
        for prev, rec in zip(trace, trace[1:]):
            if rec.d is None:
                continue
            back = prev.step_norm
            rhs = pref * (a * back + bcoef) * back
            checks.append(BoundCheck("slc", rec.k, rec.step_norm, rhs,
                                     rec.step_norm <= rhs + SLACK))
    else:
        checks.append(BoundCheck("slc", -1, math.nan, math.nan, True, skipped=True,
                                 note="lambda_rho >= R - rho: contraction bound not asserted"))

    if c.kappa > 0 and theta < c.q_linear_threshold and len(trace) >= 3:
        bound = mj.q_linear_rate(theta, c.kappa)
        x_star = trace[-1].x
        errs = [float(np.linalg.norm(x_star - rec.x)) for rec in trace[:-1]]
        for k in range(len(errs) - 1):
            if errs[k] > 0 and errs[k + 1] > 0:
                ratio = errs[k + 1] / errs[k]
                checks.append(BoundCheck("q_linear", k, ratio, bound, ratio <= bound,
                                         advisory=True, note="limsup bound; finite-k ratio is informative only"))
    return checks


def run(problem: ProblemSpec, config: SolverConfig, variant: str | None = None,
        with_audit: bool = True) -> RunReport:
    """Certify, solve and audit in one call."""
    cert = certify(problem, rho=config.rho, variant=variant, theta=config.theta)
    report = newton_solve(problem, config)
    report.certificate = cert
    if with_audit and report.trace:
        report.audit = audit(report, cert, config.theta)
    return report


def lin_error_vector(problem: ProblemSpec, y, x) -> np.ndarray:
    """``F(y) - F(x) - F'(x) (y - x)``."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return problem.residual(y) - problem.residual(x) - problem.jacobian(x) @ (y - x)


def finite_diff_jacobian_check(problem: ProblemSpec, x, h: float = 1e-6) -> float:
    """Largest entry gap between ``J(x)`` and central differences of ``F``."""
    x = np.asarray(x, dtype=float)
    J = problem.jacobian(x)
    fd = np.empty_like(J)
    for j in range(problem.n):
        e = np.zeros(problem.n)
        e[j] = h
        fd[:, j] = (problem.residual(x + e) - problem.residual(x - e)) / (2 * h)
    return float(np.max(np.abs(fd - J)))


def error_ratios(xs: Sequence[np.ndarray], x_star, floor: float = 1e-14) -> list[float]:
    """Successive ratios ``||x* - x_{k+1}|| / ||x* - x_k||`` while both errors exceed ``floor``."""
    errs = [float(np.linalg.norm(np.asarray(x) - x_star)) for x in xs]
    out = []
    for a, b in zip(errs, errs[1:]):
        if a <= floor or b <= floor:
            break
        out.append(b / a)
    return out

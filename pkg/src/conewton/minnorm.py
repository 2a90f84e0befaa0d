"""Minimal-norm solutions of linear cone inclusions ``A d + g in C``.

The workhorse is a dual active-set method in the style of Goldfarb and
Idnani, specialised to the identity Hessian: it starts from the unconstrained
minimiser ``d = 0`` and adds violated constraints one at a time while keeping
the multipliers dual feasible. Infeasibility shows up as a constraint that no
step can satisfy; its size is then measured by a phase-1 least-squares solve.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .cone import ConeSpec, Tag, violation

# a row counts as satisfied once its residual is below this multiple of its own magnitude
_FEAS_REL = 1e-12
_TINY = 1e-13
_PHASE1_FLOOR = 1e-16
BRUTE_FORCE_LIMIT = 16


class MinNormError(RuntimeError):
    """Numerical breakdown of the active-set iteration."""


class Infeasible(Exception):
    """No ``d`` satisfies ``A d + g in C``.

    ``violation`` is the smallest achievable Euclidean distance from
    ``A d + g`` to the cone, when it was measured.
    """

    def __init__(self, violation: float | None = None):
        self.violation = violation
        msg = "linear inclusion is infeasible"
        if violation is not None:
            msg += f" (min violation {violation:.3e})"
        super().__init__(msg)


@dataclass(frozen=True)
class LinearInclusion:
    A: np.ndarray
    g: np.ndarray
    cone: ConeSpec

    def __init__(self, A, g, cone: ConeSpec):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        g = np.asarray(g, dtype=float).reshape(-1)
        if A.shape[0] != g.shape[0] or g.shape[0] != cone.m:
            raise ValueError(
                f"inconsistent dimensions: A {A.shape}, g {g.shape}, cone m={cone.m}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "cone", cone)


@dataclass(frozen=True)
class MinNormSolution:
    d: np.ndarray
    norm: float
    active_set: tuple[int, ...]
    multipliers: np.ndarray
    kkt_residual: float


def _as_geq(inc: LinearInclusion):
    """Rewrite the rows as ``n_i . d >= c_i`` (inequalities) or ``= c_i``.

    Returns normals, right-hand sides, an equality mask and the originating
    row of each constraint. ``sgn`` maps a multiplier ``u`` on ``n_i`` back
    to the row multiplier ``mu_i`` of the form ``d + A^T mu = 0``.
    """
    normals, rhs, is_eq, rows, sgn = [], [], [], [], []
    for i, tag in enumerate(inc.cone.tags):
        a, gi = inc.A[i], inc.g[i]
        if tag is Tag.FREE:
            continue
        if tag is Tag.NONPOS:
            normals.append(-a), rhs.append(gi), is_eq.append(False), sgn.append(1.0)
        elif tag is Tag.NONNEG:
            normals.append(a), rhs.append(-gi), is_eq.append(False), sgn.append(-1.0)
        else:
            normals.append(a), rhs.append(-gi), is_eq.append(True), sgn.append(-1.0)
        rows.append(i)
    n = inc.A.shape[1]
    N = np.array(normals, dtype=float).reshape(len(normals), n)
    return N, np.array(rhs, dtype=float), np.array(is_eq, dtype=bool), rows, np.array(sgn)


def _phase1_violation(inc: LinearInclusion) -> float:
    """Smallest ``||dist(A d + g, C)||`` over ``d``, by bounded least squares."""
    A, g, tags = inc.A, inc.g, inc.cone.tags
    rows = [i for i, t in enumerate(tags) if t is not Tag.FREE]
    if not rows:
        return 0.0
    n = A.shape[1]
    ineq = [i for i in rows if tags[i] is not Tag.ZERO]
    # slack s_j >= 0 absorbs the satisfied side of each inequality row
    M = np.zeros((len(rows), n + len(ineq)))
    rhs = np.zeros(len(rows))
    for r, i in enumerate(rows):
        sign = -1.0 if tags[i] is Tag.NONNEG else 1.0
        M[r, :n] = sign * A[i]
        rhs[r] = -sign * g[i]
        if i in ineq:
            M[r, n + ineq.index(i)] = 1.0
    lb = np.r_[np.full(n, -np.inf), np.zeros(len(ineq))]
    res = lsq_linear(M, rhs, bounds=(lb, np.full(n + len(ineq), np.inf)), method="bvls",
                     tol=1e-14, lsmr_tol=None)
    return float(np.linalg.norm(M @ res.x - rhs))


def kkt_residual(inc: LinearInclusion, d: np.ndarray, mu: np.ndarray) -> float:
    """Scaled KKT residual of ``(d, mu)``.

    Largest of stationarity ``d + A^T mu``, cone violation of ``A d + g``,
    multiplier sign errors and complementarity on inequality rows. Each term
    is divided by the magnitude of the quantities it is computed from, so
    instances with huge multipliers are judged at their own scale.
    """
    y = inc.A @ d + inc.g
    d_mag = 1.0 + float(np.max(np.abs(d), initial=0.0))
    y_mag = 1.0 + float(np.max(np.abs(inc.A), initial=0.0)) * float(np.sum(np.abs(d))) \
        + float(np.max(np.abs(inc.g), initial=0.0))
    mu_mag = 1.0 + float(np.max(np.abs(mu), initial=0.0))
    stat = float(np.max(np.abs(d + inc.A.T @ mu), initial=0.0)) / d_mag
    sign = 0.0
    comp = 0.0
    for i, tag in enumerate(inc.cone.tags):
        if tag is Tag.NONPOS:
            sign = max(sign, -mu[i])
        elif tag is Tag.NONNEG:
            sign = max(sign, mu[i])
        elif tag is Tag.FREE:
            sign = max(sign, abs(mu[i]))
        if tag is not Tag.ZERO:
            comp = max(comp, abs(mu[i] * y[i]))
    return float(max(stat, violation(inc.cone, y) / y_mag, sign / mu_mag, comp / (mu_mag * y_mag)))


def _scale(inc: LinearInclusion) -> float:
    return max(1.0, float(np.max(np.abs(inc.A), initial=0.0)), float(np.max(np.abs(inc.g), initial=0.0)))


def solve_min_norm(inc: LinearInclusion, max_iter: int | None = None) -> MinNormSolution:
    """Euclidean minimal-norm ``d`` with ``A d + g in C``.

    Raises
    ------
    Infeasible
        If the inclusion has no solution.
    MinNormError
        If the iteration cap trips or the infeasibility verdict cannot be
        confirmed by the phase-1 measurement.
    """
    N, c, is_eq, rows, sgn = _as_geq(inc)
    n = inc.A.shape[1]
    p_total = N.shape[0]
    row_norm = np.sum(np.abs(N), axis=1) if p_total else np.zeros(0)
    if max_iter is None:
        max_iter = 50 * (p_total + 1) + 50

    x = np.zeros(n)
    active: list[int] = []
    orient: list[float] = []
    u = np.zeros(0)

    it = 0
    while True:
        s = N @ x - c if p_total else np.zeros(0)
        tol = _FEAS_REL * (np.abs(c) + row_norm * np.max(np.abs(x), initial=0.0))
        p = None
        in_active = set(active)
        for j in range(p_total):
            if is_eq[j] and j not in in_active and abs(s[j]) > tol[j]:
                p = j
                break
        if p is None:
            worst = 0.0
            for j in range(p_total):
                if not is_eq[j] and j not in in_active and -s[j] > max(worst, tol[j]):
                    worst, p = -s[j], j
        if p is None:
            break
        sigma = -1.0 if (is_eq[p] and s[p] > 0) else 1.0
        n_p, c_p = sigma * N[p], sigma * c[p]
        u_p = 0.0

        while True:
            it += 1
            if it > max_iter:
                raise MinNormError("active-set iteration limit reached")
            if active:
                Nact = (N[active].T * np.asarray(orient))
                r = np.linalg.lstsq(Nact, n_p, rcond=None)[0]
                z = n_p - Nact @ r
            else:
                r = np.zeros(0)
                z = n_p.copy()

            t1, k_drop = math.inf, -1
            for idx, j in enumerate(active):
                if not is_eq[j] and r[idx] > _TINY:
                    ratio = u[idx] / r[idx]
                    if ratio < t1:
                        t1, k_drop = ratio, idx

            zn = float(z @ n_p)
            if np.linalg.norm(z) <= 1e-12 * max(1.0, np.linalg.norm(n_p)) or zn <= 0:
                t2 = math.inf
            else:
                t2 = -(float(n_p @ x) - c_p) / zn

            if math.isinf(t1) and math.isinf(t2):
                v = _phase1_violation(inc)
                if v * v / 2 > _PHASE1_FLOOR:
                    raise Infeasible(v)
                raise MinNormError("dual active-set reported infeasible on a feasible inclusion")

            if math.isinf(t2):
                u = u - t1 * r
                u_p += t1
                del active[k_drop], orient[k_drop]
                u = np.delete(u, k_drop)
                continue

            t = min(t1, t2)
            x = x + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                orient.append(sigma)
                u = np.append(u, u_p)
                break
            del active[k_drop], orient[k_drop]
            u = np.delete(u, k_drop)

    mu = np.zeros(inc.cone.m)
    for idx, j in enumerate(active):
        mu[rows[j]] = sgn[j] * orient[idx] * u[idx]
    active_rows = tuple(sorted(rows[j] for j in active))
    kkt = kkt_residual(inc, x, mu)
    if active_rows:
        # re-solve on the final working set to shed rounding accumulated by the updates
        W = list(active_rows)
        x_pol = np.linalg.lstsq(inc.A[W], -inc.g[W], rcond=None)[0]
        mu_pol = np.zeros(inc.cone.m)
        mu_pol[W] = np.linalg.lstsq(inc.A[W].T, -x_pol, rcond=None)[0]
        kkt_pol = kkt_residual(inc, x_pol, mu_pol)
        if kkt_pol < kkt:
            x, mu, kkt = x_pol, mu_pol, kkt_pol
    return MinNormSolution(
        d=x,
        norm=float(np.linalg.norm(x)),
        active_set=active_rows,
        multipliers=mu,
        kkt_residual=kkt,
    )


def t_inverse_norm_at(A, w, cone: ConeSpec) -> float:
    """``min{ ||d|| : A d - w in C }``, or ``inf`` when the set is empty."""
    try:
        return solve_min_norm(LinearInclusion(A, -np.asarray(w, dtype=float), cone)).norm
    except Infeasible:
        return math.inf


def robinson_check(A, cone: ConeSpec) -> bool:
    """Whether ``d -> A d - C`` maps onto the whole output space.

    The inverse process is positively homogeneous and superadditive, so
    ``T^{-1}(y) ⊇ sum_i |y_i| T^{-1}(sign(y_i) e_i)``. Nonempty images at
    the 2m signed basis vectors therefore give a nonempty image everywhere,
    and the converse is immediate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m = cone.m
    for i in range(m):
        for s in (1.0, -1.0):
            e = np.zeros(m)
            e[i] = s
            if math.isinf(t_inverse_norm_at(A, e, cone)):
                return False
    return True


def brute_force_min_norm(inc: LinearInclusion) -> MinNormSolution:
    """Reference solver that tries every candidate active set.

    Each candidate keeps all equality rows plus a subset of the inequality
    rows as equalities, takes the least-norm solution of that linear system,
    and survives if it is feasible with correctly signed multipliers.
    """
    tags = inc.cone.tags
    eq_rows = [i for i, t in enumerate(tags) if t is Tag.ZERO]
    ineq_rows = [i for i, t in enumerate(tags) if t in (Tag.NONPOS, Tag.NONNEG)]
    if len(eq_rows) + len(ineq_rows) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force is limited to {BRUTE_FORCE_LIMIT} constrained rows")
    A, g = inc.A, inc.g
    n = A.shape[1]
    scale = _scale(inc)
    tol = 1e-9 * scale

    best = None
    for k in range(len(ineq_rows) + 1):
        for subset in itertools.combinations(ineq_rows, k):
            W = sorted(eq_rows + list(subset))
            if W:
                AW = A[W]
                d = np.linalg.pinv(AW) @ (-g[W])
                if np.max(np.abs(AW @ d + g[W])) > tol:
                    continue
            else:
                d = np.zeros(n)
            y = A @ d + g
            if violation(inc.cone, y) > tol:
                continue
            mu = np.zeros(inc.cone.m)
            if W:
                mu_W = np.linalg.lstsq(A[W].T, -d, rcond=None)[0]
                if np.max(np.abs(d + A[W].T @ mu_W), initial=0.0) > 1e-8 * scale:
                    continue
                mu[W] = mu_W
            bad = any(
                (tags[i] is Tag.NONPOS and mu[i] < -tol) or (tags[i] is Tag.NONNEG and mu[i] > tol)
                for i in W
            )
            if bad:
                continue
            nrm = float(np.linalg.norm(d))
            if best is None or nrm < best[0] - 1e-15:
                best = (nrm, d, tuple(W), mu)
    if best is None:
        raise Infeasible()
    nrm, d, W, mu = best
    return MinNormSolution(d=d, norm=nrm, active_set=W, multipliers=mu,
                           kkt_residual=kkt_residual(inc, d, mu))


def random_instance(rng: np.random.Generator, max_dim: int = 6) -> LinearInclusion:
    """Random inclusion with ``n, m <= max_dim``, mixed tags and U[-2, 2] entries."""
    n = int(rng.integers(1, max_dim + 1))
    m = int(rng.integers(1, max_dim + 1))
    tags = [list(Tag)[i] for i in rng.integers(0, 4, size=m)]
    A = rng.uniform(-2.0, 2.0, size=(m, n))
    g = rng.uniform(-2.0, 2.0, size=m)
    return LinearInclusion(A, g, ConeSpec(tags))

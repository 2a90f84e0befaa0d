"""Scalar majorant functions and the constants that certify inexact Newton runs.

Two concrete majorants are supported: the quadratic (Lipschitz) model

    f(t) = (L/2) t**2 - t + b,            t in [0, 1/L)

and the rational (Smale) model

    f(t) = t / (1 - gamma t) - 2 t + b,   t in [0, 1/gamma).

A majorant shifted by a robustness radius ``rho`` (see :func:`shift`) exposes
the same evaluation interface, so every routine below works on either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar

LIPSCHITZ = "lipschitz"
SMALE = "smale"
VARIANTS = (LIPSCHITZ, SMALE)

SMALE_BOUND = 3.0 - 2.0 * math.sqrt(2.0)

_GRID_POINTS = 1024
_EDGE = 1e-12
_ARG_TOL = 1e-11
_SEQ_FLOOR = 1e-15
_REGION_SLACK = 1e-12


class MajorantError(ValueError):
    """Base class for majorant-model failures."""


class DomainError(MajorantError):
    """Raised when a majorant is evaluated outside ``[0, R)``."""


class NoRootError(MajorantError):
    """Raised when the model parameters leave ``f`` without a root in ``(0, R)``."""


class PreconditionError(MajorantError):
    """Raised when an argument violates an operation's precondition."""


class _ScalarMajorant:
    """Evaluation interface shared by base and shifted majorants."""

    R: float

    def _f(self, t):
        raise NotImplementedError

    def _df(self, t):
        raise NotImplementedError

    def _d2f(self, t):
        raise NotImplementedError

    def eval(self, t: float) -> tuple[float, float, float]:
        """Return ``(f(t), f'(t), D^- f'(t))``."""
        if not (0.0 <= t < self.R):
            raise DomainError(f"t={t!r} outside [0, {self.R!r})")
        return float(self._f(t)), float(self._df(t)), float(self._d2f(t))

    def f(self, t: float) -> float:
        return self.eval(t)[0]

    def fprime(self, t: float) -> float:
        return self.eval(t)[1]


@dataclass(frozen=True)
class MajorantModel(_ScalarMajorant):
    """One of the two concrete majorant functions.

    Parameters
    ----------
    variant : {"lipschitz", "smale"}
    b : float
        Value ``f(0)``; an upper bound on the initial residual inner norm.
    L : float, optional
        Lipschitz constant (Lipschitz variant).
    gamma : float, optional
        Smale constant (Smale variant).
    """

    variant: str
    b: float
    L: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise MajorantError(f"unknown variant {self.variant!r}")
        if not self.b > 0:
            raise MajorantError("b must be positive")
        if self.variant == LIPSCHITZ:
            if self.L is None or not self.L > 0:
                raise MajorantError("Lipschitz variant needs L > 0")
            if 2.0 * self.b * self.L > 1.0:
                raise NoRootError(f"2bL = {2 * self.b * self.L:.12g} > 1: f has no root")
        else:
            if self.gamma is None or not self.gamma > 0:
                raise MajorantError("Smale variant needs gamma > 0")
            if self.b * self.gamma > SMALE_BOUND:
                raise NoRootError(
                    f"b*gamma = {self.b * self.gamma:.12g} > 3-2*sqrt(2): f has no root"
                )

    @classmethod
    def lipschitz(cls, b: float, L: float) -> "MajorantModel":
        return cls(LIPSCHITZ, float(b), L=float(L))

    @classmethod
    def smale(cls, b: float, gamma: float) -> "MajorantModel":
        return cls(SMALE, float(b), gamma=float(gamma))

    @property
    def R(self) -> float:
        return 1.0 / (self.L if self.variant == LIPSCHITZ else self.gamma)

    @property
    def boundary(self) -> bool:
        """True when the model sits exactly on its admissibility bound."""
        if self.variant == LIPSCHITZ:
            return 2.0 * self.b * self.L == 1.0
        return self.b * self.gamma == SMALE_BOUND

    def _f(self, t):
        if self.variant == LIPSCHITZ:
            return 0.5 * self.L * t * t - t + self.b
        return t / (1.0 - self.gamma * t) - 2.0 * t + self.b

    def _df(self, t):
        if self.variant == LIPSCHITZ:
            return self.L * t - 1.0
        return 1.0 / (1.0 - self.gamma * t) ** 2 - 2.0

    def _d2f(self, t):
        if self.variant == LIPSCHITZ:
            return self.L + 0.0 * t
        return 2.0 * self.gamma / (1.0 - self.gamma * t) ** 3


@dataclass(frozen=True)
class ShiftedMajorant(_ScalarMajorant):
    """``g(s) = -(f(s + rho) + 2 rho) / f'(rho)`` on ``[0, R - rho)``."""

    base: MajorantModel
    rho: float
    _scale: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_scale", abs(float(self.base._df(self.rho))))

    @property
    def R(self) -> float:
        return self.base.R - self.rho

    @property
    def boundary(self) -> bool:
        return self.base.boundary

    def _f(self, s):
        return (self.base._f(s + self.rho) + 2.0 * self.rho) / self._scale

    def _df(self, s):
        return self.base._df(s + self.rho) / self._scale

    def _d2f(self, s):
        return self.base._d2f(s + self.rho) / self._scale


@dataclass(frozen=True)
class CriticalPoints:
    t_star: float
    t_bar: float
    beta: float


@dataclass(frozen=True)
class ConvergenceConstants:
    """Certified constants for a robustness radius ``rho``.

    ``lambda_radius`` is the radius of the ball around the starting point that
    contains every iterate; ``lambda_point`` is the same quantity on the
    t-axis of the unshifted majorant (``lambda_radius + rho``). ``h5`` is
    true when ``lambda_radius < R - rho``, the extra room the step
    contraction bound needs.
    """

    rho: float
    kappa: float
    lambda_radius: float
    lambda_point: float
    theta_tilde: float
    q_linear_threshold: float
    h5: bool


@dataclass(frozen=True)
class MajorantSequence:
    t: tuple[float, ...]
    eps: tuple[float, ...]
    theta: float

    def __len__(self):
        return len(self.t)


@lru_cache(maxsize=256)
def critical_points(model: _ScalarMajorant) -> CriticalPoints:
    """Smallest root ``t_star``, end of the descent interval ``t_bar`` and ``beta``.

    Closed forms are used for the two base variants; shifted majorants fall
    back to bracketing root finders.
    """
    if isinstance(model, MajorantModel):
        if model.variant == LIPSCHITZ:
            L, b = model.L, model.b
            disc = max(1.0 - 2.0 * b * L, 0.0)
            t_star = 2.0 * b / (1.0 + math.sqrt(disc))
            t_bar = 1.0 / L
        else:
            g, b = model.gamma, model.b
            bg = b * g
            disc = max((1.0 + bg) ** 2 - 8.0 * bg, 0.0)
            # smaller root of 2 g t^2 - (1 + b g) t + b = 0, cancellation-free form
            t_star = 2.0 * b / ((1.0 + bg) + math.sqrt(disc))
            t_bar = (1.0 - 1.0 / math.sqrt(2.0)) / g
        beta = -float(model._f(t_bar))
        return CriticalPoints(t_star, t_bar, beta)

    R = model.R
    if model._df(R * (1 - 1e-15)) < 0:
        t_bar = R
    else:
        t_bar = brentq(model._df, 0.0, R * (1 - 1e-15), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    beta = -float(model._f(t_bar))
    if beta < 0:
        raise NoRootError("shifted majorant has no root")
    t_star = brentq(model._f, 0.0, t_bar, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return CriticalPoints(float(t_star), float(t_bar), beta)


def _check_rho(model: MajorantModel, rho: float) -> None:
    if rho < 0:
        raise PreconditionError("rho must be nonnegative")
    if rho == 0:
        return
    beta = critical_points(model).beta
    if not rho < beta / 2:
        raise PreconditionError(f"rho={rho!r} must be below beta/2={beta / 2!r}")


def shift(model: MajorantModel, rho: float) -> _ScalarMajorant:
    """Majorant at a perturbed start point within distance ``rho`` of ``x0``."""
    _check_rho(model, rho)
    if rho == 0:
        return model
    return ShiftedMajorant(model, float(rho))


def _sup_minus_f_over_t(g: _ScalarMajorant) -> float:
    R = g.R
    hi = R - _EDGE * max(1.0, R)
    grid = np.linspace(0.0, hi, _GRID_POINTS + 1)[1:]
    vals = -g._f(grid) / grid
    i = int(np.argmax(vals))
    lo_b = grid[i - 1] if i > 0 else grid[0] * 1e-6
    hi_b = grid[i + 1] if i + 1 < grid.size else hi
    res = minimize_scalar(
        lambda s: -(-g._f(s) / s),
        bounds=(lo_b, hi_b),
        method="bounded",
        options={"xatol": _ARG_TOL},
    )
    return max(float(vals[i]), float(-res.fun))


def q_linear_threshold(kappa: float) -> float:
    """Largest tolerance for which the asymptotic Q-linear rate bound is below one."""
    k1 = kappa + 1.0
    return (-2.0 * k1 + math.sqrt(4.0 * k1 * k1 + kappa * (4.0 + kappa))) / (4.0 + kappa)


def q_linear_rate(theta: float, kappa: float) -> float:
    return (1 + theta) / (1 - theta) * ((1 + theta) / 2 + 2 * theta / kappa)


@lru_cache(maxsize=256)
def _constants_of(g: _ScalarMajorant) -> tuple[float, float]:
    kappa = _sup_minus_f_over_t(g)
    if g.boundary and kappa < 1e-9:
        kappa = 0.0
    R = g.R
    top = R * (1 - 1e-15)
    if kappa + g._df(top) < 0:
        lam = R
    else:
        lam = brentq(lambda s: kappa + g._df(s), 0.0, top, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return kappa, float(lam)


def constants(model: MajorantModel, rho: float = 0.0) -> ConvergenceConstants:
    """Compute ``kappa``, ``lambda``, ``theta_tilde`` and the Q-linear threshold.

    ``kappa`` is the supremum of ``-(f(t) + 2 rho) / (|f'(rho)| (t - rho))``
    over ``(rho, R)``, found by a grid bracket followed by bounded Brent
    refinement. The containment radius is computed on the shifted majorant,
    which is what the convergence argument actually uses.
    """
    if isinstance(model, ShiftedMajorant):
        if rho:
            raise PreconditionError("cannot shift an already shifted majorant")
        g, rho = model, model.rho
    else:
        g = shift(model, rho)
    kappa, lam = _constants_of(g)
    if kappa == 0.0:
        theta_tilde = 0.0
        qlt = 0.0
    else:
        theta_tilde = kappa / (2.0 - kappa)
        qlt = q_linear_threshold(kappa)
    return ConvergenceConstants(
        rho=float(rho),
        kappa=kappa,
        lambda_radius=lam,
        lambda_point=lam + rho,
        theta_tilde=theta_tilde,
        q_linear_threshold=qlt,
        h5=lam < g.R,
    )


def closed_form_constants(model: MajorantModel) -> ConvergenceConstants:
    """Closed-form constants at ``rho = 0`` for the two base variants."""
    if model.variant == LIPSCHITZ:
        s = math.sqrt(2.0 * model.b * model.L)
        kappa = 1.0 - s
        lam = s / model.L
        theta_tilde = (1.0 - s) / (1.0 + s)
    else:
        s = math.sqrt(model.gamma * model.b)
        gb = model.gamma * model.b
        kappa = 1.0 - 2.0 * s - gb
        lam = model.b / (s + gb)
        theta_tilde = (1.0 - 2.0 * s - gb) / (1.0 + 2.0 * s + gb)
    qlt = q_linear_threshold(kappa) if kappa > 0 else 0.0
    return ConvergenceConstants(0.0, kappa, lam, lam, theta_tilde, qlt, lam < model.R)


def in_region_A(model: _ScalarMajorant, t: float, eps: float, tol: float = 0.0) -> bool:
    """Membership in the invariant region of the scalar inexact iteration.

    ``tol`` relaxes the inequalities by a relative amount; zero gives the
    exact definition.
    """
    c = constants(model)
    if not (-tol <= t < c.lambda_radius * (1 + tol)):
        return False
    if not (-tol * max(1.0, t) <= eps <= c.kappa * t + tol * max(1.0, t)):
        return False
    if not 0.0 <= t < model.R:
        return False
    return float(model._f(t)) + eps > 0.0


def n_theta(model: _ScalarMajorant, t: float, eps: float, theta: float) -> tuple[float, float]:
    """One step of the inexact Newton iteration applied to the majorant."""
    c = constants(model)
    if not 0.0 <= theta <= c.theta_tilde * (1 + 1e-15):
        raise PreconditionError(f"theta={theta!r} outside [0, {c.theta_tilde!r}]")
    if not in_region_A(model, t, eps, tol=_REGION_SLACK):
        raise PreconditionError(f"({t!r}, {eps!r}) is not in the invariant region")
    fv, fp, _ = model.eval(t)
    if fp >= 0:
        raise DomainError(f"f'({t!r}) = {fp!r} is not negative")
    val = fv + eps
    return t - (1.0 + theta) * val / fp, eps + 2.0 * theta * val


def majorant_sequence(model: _ScalarMajorant, theta: float, k_max: int) -> MajorantSequence:
    """Iterate :func:`n_theta` from ``(0, 0)``.

    Stops early once ``f(t_k) + eps_k`` drops below 1e-15, since further
    points carry no information in double precision. An iterate that rounds
    onto the root (``f + eps <= 0``) is kept as the final point.
    """
    if k_max < 1:
        raise PreconditionError("k_max must be at least 1")
    ts, es = [0.0], [0.0]
    for _ in range(k_max):
        t, e = ts[-1], es[-1]
        if float(model._f(t)) + e < _SEQ_FLOOR:
            break
        t, e = n_theta(model, t, e, theta)
        if t >= model.R:
            break
        ts.append(t)
        es.append(e)
        if float(model._f(t)) + e <= 0.0:
            break
    return MajorantSequence(tuple(ts), tuple(es), float(theta))


def sequence_values(model: _ScalarMajorant, seq: MajorantSequence) -> list[float]:
    return [float(model._f(t)) + e for t, e in zip(seq.t, seq.eps)]


def lin_error_scalar(model: _ScalarMajorant, v: float, t: float) -> float:
    """Linearization error ``f(v) - f(t) - f'(t) (v - t)``."""
    fv = model.eval(v)[0]
    ft, dft, _ = model.eval(t)
    return fv - ft - dft * (v - t)

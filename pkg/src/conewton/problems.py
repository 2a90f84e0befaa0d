"""Polynomial problem representation and the built-in test problems."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cone import ConeSpec
from .newton import ProblemSpec

Term = tuple[float, tuple[int, ...]]


@dataclass(frozen=True)
class PolynomialSystem:
    """``m`` polynomials in ``n`` variables, each a list of monomial terms."""

    n: int
    m: int
    polys: tuple[tuple[Term, ...], ...]

    def __init__(self, n: int, polys: Sequence[Sequence[Term]]):
        clean = []
        for i, poly in enumerate(polys):
            terms = []
            for coef, exps in poly:
                exps = tuple(int(e) for e in exps)
                if len(exps) != n:
                    raise ValueError(f"polynomial {i}: exponent tuple {exps} has length != n={n}")
                if any(e < 0 for e in exps):
                    raise ValueError(f"polynomial {i}: negative exponent in {exps}")
                terms.append((float(coef), exps))
            clean.append(tuple(terms))
        if not clean:
            raise ValueError("a system needs at least one polynomial")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "m", len(clean))
        object.__setattr__(self, "polys", tuple(clean))


def _check_x(sys: PolynomialSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != sys.n:
        raise ValueError(f"expected {sys.n} variables, got {x.shape[0]}")
    return x


def eval_poly(sys: PolynomialSystem, x) -> np.ndarray:
    x = _check_x(sys, x)
    out = np.zeros(sys.m)
    for i, poly in enumerate(sys.polys):
        out[i] = sum(c * math.prod(x[j] ** e for j, e in enumerate(exps) if e) for c, exps in poly)
    return out


def jac_poly(sys: PolynomialSystem, x) -> np.ndarray:
    x = _check_x(sys, x)
    J = np.zeros((sys.m, sys.n))
    for i, poly in enumerate(sys.polys):
        for c, exps in poly:
            for j, e in enumerate(exps):
                if e == 0:
                    continue
                val = c * e * x[j] ** (e - 1)
                for l, el in enumerate(exps):
                    if l != j and el:
                        val *= x[l] ** el
                J[i, j] += val
    return J


def problem_from_polynomials(sys: PolynomialSystem, cone: ConeSpec, x0, name: str = "problem",
                             lipschitz_L=None, smale_gamma=None, domain_radius=None,
                             default_variant=None) -> ProblemSpec:
    return ProblemSpec(
        n=sys.n,
        m=sys.m,
        F=lambda x: eval_poly(sys, x),
        J=lambda x: jac_poly(sys, x),
        cone=cone,
        x0=np.asarray(x0, dtype=float),
        lipschitz_L=lipschitz_L,
        smale_gamma=smale_gamma,
        domain_radius=domain_radius,
        name=name,
        default_variant=default_variant,
    )


QUAD1D = PolynomialSystem(1, [[(1.0, (2,)), (-2.0, (0,))]])

INEQ2 = PolynomialSystem(2, [
    [(1.0, (2, 0)), (1.0, (0, 2)), (-4.0, (0, 0))],
    [(1.0, (1, 0)), (1.0, (0, 1)), (-1.0, (0, 0))],
    [(-1.0, (1, 0))],
])

# ||T^{-1}[(F'(y) - F'(x)) u]|| for ineq2 at x0 is sqrt(2) * max(0, -2 (y-x).u) / 0.6,
# so the affine-invariant Lipschitz constant is 2 sqrt(2) / 0.6.
INEQ2_L = 2.0 * math.sqrt(2.0) / 0.6

BUILTINS = ("quad1d", "ineq2", "smale1d")


def builtin(name: str) -> ProblemSpec:
    """Built-in problems with hand-derivable constants."""
    if name == "quad1d":
        # F'(x0) = 3, F'(y) - F'(x) = 2 (y - x)
        return problem_from_polynomials(QUAD1D, ConeSpec(["zero"]), [1.5], name="quad1d",
                                        lipschitz_L=2.0 / 3.0, smale_gamma=1.0 / 3.0,
                                        domain_radius=1.5)
    if name == "smale1d":
        return problem_from_polynomials(QUAD1D, ConeSpec(["zero"]), [1.5], name="smale1d",
                                        smale_gamma=1.0 / 3.0, domain_radius=3.0,
                                        default_variant="smale")
    if name == "ineq2":
        return problem_from_polynomials(INEQ2, ConeSpec(["nonpos", "zero", "nonpos"]), [0.4, 0.7],
                                        name="ineq2", lipschitz_L=INEQ2_L,
                                        domain_radius=1.0 / INEQ2_L)
    raise KeyError(f"unknown builtin problem {name!r}; choose from {', '.join(BUILTINS)}")

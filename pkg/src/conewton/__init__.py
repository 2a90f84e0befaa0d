"""Inexact Newton method for nonlinear cone inclusions ``F(x) in C``.

The package certifies semilocal convergence through majorant functions
(Lipschitz and Smale models), runs the iteration with minimal-norm steps
computed by an exact active-set QP, and audits finished runs against every
certified bound.
"""

from .cone import ConeSpec, Tag, contains, violation
from .majorant import (MajorantModel, constants, critical_points, majorant_sequence, n_theta,
                       shift)
from .minnorm import (Infeasible, LinearInclusion, MinNormSolution, brute_force_min_norm,
                      robinson_check, solve_min_norm, t_inverse_norm_at)
from .newton import (Certificate, CertificationError, ProblemSpec, ResidualMode, RunReport,
                     SolverConfig, Status, audit, certify, newton_solve, run)
from .problems import BUILTINS, PolynomialSystem, builtin

__all__ = [
    "ConeSpec", "Tag", "contains", "violation",
    "MajorantModel", "constants", "critical_points", "majorant_sequence", "n_theta", "shift",
    "Infeasible", "LinearInclusion", "MinNormSolution", "brute_force_min_norm", "robinson_check",
    "solve_min_norm", "t_inverse_norm_at",
    "Certificate", "CertificationError", "ProblemSpec", "ResidualMode", "RunReport",
    "SolverConfig", "Status", "audit", "certify", "newton_solve", "run",
    "BUILTINS", "PolynomialSystem", "builtin",
]
__version__ = "0.1.0"

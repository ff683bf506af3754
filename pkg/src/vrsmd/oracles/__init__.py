"""Independent reference solvers and certificates."""

from .bounds import (
    BOUND_KINDS,
    ConvergenceConstants,
    EpsilonReport,
    MissingConstantError,
    RateRegimeError,
    convergence_constants,
    epsilon_solution_check,
    tau_general,
    tau_interpolant,
    tau_l2,
    theoretical_bound_rhs,
)
from .certify import (
    NotCertifiableError,
    RecoveryCertificate,
    TheoremInapplicableError,
    check_s_good,
    delta_bound,
    min_l1_interpolant,
    re_constant,
    recovery_certificate,
    recovery_error_bound,
)
from .interpolants import (
    ORACLE_RTOL,
    InterpolantCertificate,
    InterpolantConvergenceError,
    min_l2_interpolant,
    min_mirror_interpolant,
    primal_newton_interpolant,
)
from .simplex import LPError, LPResult, simplex

__all__ = [name for name in dir() if not name.startswith("_")]

"""Variance-reduced stochastic mirror descent for least squares, with verification oracles."""

__version__ = "0.1.0"

from .core import (
    DegenerateProblemError,
    DesignProblem,
    SparseGroundTruth,
    full_gradient,
    load_problem_csv,
    objective_value,
    sample_gradient,
    save_problem_csv,
    spectral_facts,
)
from .mirror import (
    MirrorDomainError,
    MirrorMap,
    NegativeEntropy,
    PowerNorm,
    QuadraticForm,
    SquaredL2,
    bregman_divergence,
    parse_mirror,
)
from .solvers import (
    NonFiniteIterateError,
    SolverConfig,
    SolverRun,
    StepSizeWarning,
    run_hadamard_gd,
    run_mirror_descent,
    run_smd,
    run_svrg,
    run_vrsmd,
    step_size_bound,
    variance_reduced_direction,
)

"""Shared problem instances for the test suites."""

import numpy as np

from vrsmd.core import DesignProblem
from vrsmd.experiments import SimulationSpec, simulate_sparse_data


def random_problem(n, p, seed=0):
    rng = np.random.default_rng(seed)
    return DesignProblem(rng.standard_normal((n, p)), rng.standard_normal(n))


def harmonic_frame(n=40, k=6, seed=0):
    """n x 2k cosine/sine frame: every row has norm^2 = k and X^T X = (n/2) I."""
    t = np.arange(n)[:, None]
    j = np.arange(1, k + 1)[None, :]
    x = np.hstack([np.cos(2 * np.pi * j * t / n), np.sin(2 * np.pi * j * t / n)])
    y = np.random.default_rng(seed).standard_normal(n)
    return DesignProblem(x, y)


# 12 x 16 design with an exhaustively certified s-good constant (s = 2)
RECOVERY_SPEC = SimulationSpec(n=12, p=16, s=2, rho=0.5, noise_sd=0.0, seed=268)


def recovery_instance():
    return simulate_sparse_data(RECOVERY_SPEC)


IMPLICIT_SPEC = SimulationSpec(n=10, p=30, s=3, rho=0.0, noise_sd=0.0, seed=0)


def implicit_instance():
    return simulate_sparse_data(IMPLICIT_SPEC)

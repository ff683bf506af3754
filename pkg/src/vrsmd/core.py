"""Finite-sum least-squares problems and the spectral facts of their design."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RANK_RTOL = 1e-10


class DegenerateProblemError(ValueError):
    """Raised when the design matrix has no nonzero singular value."""


@dataclass(frozen=True)
class SpectralFacts:
    """Cached thin SVD of ``X`` and the subspace bases derived from it.

    ``row_basis`` spans col(X^T) (p x r), ``null_basis`` spans N(X) (p x (p-r)),
    ``col_basis`` spans col(X) (n x r) and ``left_null_basis`` spans N(X^T).
    """

    singular_values: np.ndarray
    rank: int
    col_basis: np.ndarray
    left_null_basis: np.ndarray
    row_basis: np.ndarray
    null_basis: np.ndarray

    @property
    def s_min(self) -> float:
        return float(self.singular_values[self.rank - 1])

    @property
    def s_max(self) -> float:
        return float(self.singular_values[0])

    def proj_col(self) -> np.ndarray:
        return self.col_basis @ self.col_basis.T

    def proj_left_null(self) -> np.ndarray:
        return self.left_null_basis @ self.left_null_basis.T

    def proj_row(self) -> np.ndarray:
        return self.row_basis @ self.row_basis.T

    def proj_null(self) -> np.ndarray:
        return self.null_basis @ self.null_basis.T

    def row_component(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ``v`` onto col(X^T)."""
        return self.row_basis @ (self.row_basis.T @ v)

    def null_component(self, v: np.ndarray) -> np.ndarray:
        return v - self.row_component(v)

    def col_component(self, y: np.ndarray) -> np.ndarray:
        """Orthogonal projection of ``y`` onto col(X)."""
        return self.col_basis @ (self.col_basis.T @ y)


def _spectral_decomposition(x: np.ndarray) -> SpectralFacts:
    n, p = x.shape
    u, s, vt = np.linalg.svd(x, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateProblemError("design matrix is identically zero")
    r = int(np.sum(s > RANK_RTOL * s[0]))
    return SpectralFacts(
        singular_values=s[:r].copy(),
        rank=r,
        col_basis=u[:, :r].copy(),
        left_null_basis=u[:, r:].copy(),
        row_basis=vt[:r].T.copy(),
        null_basis=vt[r:].T.copy(),
    )


@dataclass(frozen=True, eq=False)
class DesignProblem:
    """Least squares ``F(beta) = ||X beta - y||^2 / (2n)`` as a finite sum.

    The SVD is computed once at construction. Instances are treated as
    immutable: the stored arrays are made read-only.
    """

    x_matrix: np.ndarray
    y: np.ndarray
    spectral: SpectralFacts = field(init=False, repr=False)
    smoothness_l: float = field(init=False)

    def __post_init__(self):
        x = np.array(self.x_matrix, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.ndim != 2:
            raise ValueError(f"design matrix must be 2-D, got shape {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise ValueError(f"y has length {y.shape[0]} but X has {x.shape[0]} rows")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x_matrix", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "spectral", _spectral_decomposition(x))
        object.__setattr__(self, "smoothness_l", float(np.max(np.einsum("ij,ij->i", x, x))))

    @property
    def n(self) -> int:
        return self.x_matrix.shape[0]

    @property
    def p(self) -> int:
        return self.x_matrix.shape[1]

    @property
    def s_m(self) -> float:
        """Smallest nonzero singular value of X."""
        return self.spectral.s_min

    @property
    def rank(self) -> int:
        return self.spectral.rank

    def projected_response(self) -> np.ndarray:
        """P_col(X) y, the attainable part of the response."""
        return self.spectral.col_component(self.y)

    def subset(self, rows) -> "DesignProblem":
        rows = np.asarray(rows)
        return DesignProblem(self.x_matrix[rows], self.y[rows])


@dataclass(frozen=True)
class SparseGroundTruth:
    beta_o: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta_o)

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.beta_o))


def _check_beta(prob: DesignProblem, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (prob.p,):
        raise ValueError(f"beta must have shape ({prob.p},), got {beta.shape}")
    return beta


def objective_value(prob: DesignProblem, beta) -> float:
    beta = _check_beta(prob, beta)
    r = prob.x_matrix @ beta - prob.y
    return float(r @ r) / (2 * prob.n)


def sample_gradient(prob: DesignProblem, i: int, beta) -> np.ndarray:
    """Gradient of ``f_i(beta) = (x_i^T beta - y_i)^2 / 2`` (0-based ``i``)."""
    beta = _check_beta(prob, beta)
    if not 0 <= i < prob.n:
        raise IndexError(f"sample index {i} out of range for n={prob.n}")
    xi = prob.x_matrix[i]
    return xi * (xi @ beta - prob.y[i])


def full_gradient(prob: DesignProblem, beta) -> np.ndarray:
    beta = _check_beta(prob, beta)
    return prob.x_matrix.T @ (prob.x_matrix @ beta - prob.y) / prob.n


def spectral_facts(prob: DesignProblem):
    """Return ``(s_m, rank, projectors)`` with projectors keyed by subspace name."""
    sp = prob.spectral
    projectors = {
        "col_x": sp.proj_col(),
        "null_xt": sp.proj_left_null(),
        "col_xt": sp.proj_row(),
        "null_x": sp.proj_null(),
    }
    return sp.s_min, sp.rank, projectors


def load_problem_csv(path, header: bool = False) -> DesignProblem:
    """Read a CSV whose first column is ``y`` and remaining columns are rows of X."""
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1 if header else 0, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least two columns (y and one feature)")
    return DesignProblem(data[:, 1:], data[:, 0])


def save_problem_csv(prob: DesignProblem, path, header: bool = False) -> None:
    data = np.column_stack([prob.y, prob.x_matrix])
    head = ",".join(["y"] + [f"x{j + 1}" for j in range(prob.p)]) if header else ""
    np.savetxt(Path(path), data, delimiter=",", header=head, comments="", fmt="%.17g")

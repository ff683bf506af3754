"""Exhaustive certificates for sparse recovery: s-goodness, restricted eigenvalue, l1 interpolant."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ..core import DesignProblem
from .simplex import simplex

MAX_NULL_DIM = 6
MAX_P = 20
MAX_SUPPORTS = 2_000_000


class NotCertifiableError(ValueError):
    """The instance is too large for exhaustive certification at desk scale."""


class TheoremInapplicableError(ValueError):
    """The hypotheses of the recovery bound do not hold."""


def min_l1_interpolant(prob: DesignProblem, full_output: bool = False):
    """argmin ||b||_1 subject to ``X b = P_col(X) y``, solved exactly by simplex.

    The constraint is written as ``V^T b = S^{-1} U^T y`` (r independent rows)
    and ``b = b_plus - b_minus`` with both parts nonnegative. When the
    minimiser is not unique one vertex is returned; ``full_output=True``
    also returns the optimal value.
    """
    sp = prob.spectral
    vt = sp.row_basis.T
    z = (sp.col_basis.T @ prob.y) / sp.singular_values
    p = prob.p
    res = simplex(np.ones(2 * p), np.hstack([vt, -vt]), z)
    beta = res.x[:p] - res.x[p:]
    value = float(np.abs(beta).sum())
    return (beta, value) if full_output else beta


def _chunks(seq, k):
    k = max(1, k)
    size = max(1, math.ceil(len(seq) / k))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def _map_reduce(fn, items, threads, reduce):
    if threads <= 1 or len(items) < 2:
        return reduce([fn(items)])
    parts = _chunks(items, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return reduce(list(pool.map(fn, parts)))


def _null_vertices(nb, subsets, tol=1e-9):
    """Extreme points of ``{u in N(X): ||u||_1 <= 1}`` whose zero set contains each subset."""
    p, d = nb.shape
    if d == 1:
        u = nb[:, 0]
        return (u / np.abs(u).sum())[None, :]
    rows = nb[np.array(subsets)]  # (K, d-1, d)
    _, sv, vh = np.linalg.svd(rows)
    ok = sv[:, -1] > tol * np.maximum(sv[:, 0], 1e-300)
    c = vh[ok, -1, :]
    u = c @ nb.T
    return u / np.abs(u).sum(axis=1, keepdims=True)


def check_s_good(prob: DesignProblem, s: int, threads: int = 1) -> float:
    """Exact ``kappa* = max_{|I|<=s} max_{u in N(X)} ||u_I||_1 / ||u||_1``.

    ``||u_I||_1`` is convex, so its maximum over the polytope
    ``{u in N(X) : ||u||_1 <= 1}`` sits at a vertex. Vertices are null-space
    vectors vanishing on ``dim N(X) - 1`` coordinates, so enumerating those
    coordinate subsets enumerates every vertex; the best support for a
    vertex is its ``s`` largest entries. ``X`` is s-good iff the result is
    below 1/2.
    """
    s = int(s)
    if s < 1:
        raise ValueError("s must be >= 1")
    nb = prob.spectral.null_basis
    p, d = nb.shape
    if d == 0:
        return 0.0
    if d > MAX_NULL_DIM or p > MAX_P:
        raise NotCertifiableError(
            f"dim N(X)={d}, p={p}: exhaustive s-good certification needs dim N(X) <= {MAX_NULL_DIM} and p <= {MAX_P}"
        )
    subsets = list(combinations(range(p), d - 1))
    top = min(s, p)

    def worst(chunk):
        u = np.abs(_null_vertices(nb, chunk))
        if u.size == 0:
            return 0.0
        part = -np.sort(-u, axis=1)[:, :top].sum(axis=1)
        return float(part.max())

    return _map_reduce(worst, subsets, threads, max)


def re_constant(prob: DesignProblem, s: int, threads: int = 1) -> float:
    """``gamma = min_{|I|=s} lambda_min(X_I^T X_I) / n`` by enumerating supports."""
    s = int(s)
    p = prob.p
    if not 1 <= s <= p:
        raise ValueError(f"need 1 <= s <= p, got s={s}")
    if p > MAX_P or math.comb(p, s) > MAX_SUPPORTS:
        raise NotCertifiableError(f"C({p},{s}) supports exceed the exhaustive budget (p <= {MAX_P})")
    gram = prob.x_matrix.T @ prob.x_matrix
    supports = list(combinations(range(p), s))

    def smallest(chunk):
        idx = np.array(chunk)
        sub = gram[idx[:, :, None], idx[:, None, :]]
        return float(np.linalg.eigvalsh(sub)[:, 0].min())

    return _map_reduce(smallest, supports, threads, min) / prob.n


def delta_bound(xi, kappa, gamma, s, n, y_norm, p) -> float:
    """Largest power-map exponent ``delta`` guaranteeing l1 error at most ``xi``."""
    if not kappa < 0.5:
        raise TheoremInapplicableError(f"kappa={kappa} >= 1/2: X is not certified s-good")
    if not (gamma > 0 and xi > 0 and y_norm > 0 and s >= 1 and n >= 1):
        raise ValueError("need gamma > 0, xi > 0, ||y|| > 0, s >= 1, n >= 1")
    if p < 2:
        raise ValueError("need p >= 2")
    lift = math.log1p((1 - 2 * kappa) * math.sqrt(n * gamma) / (math.sqrt(s) * y_norm) * xi)
    denom = math.log(p) - lift
    if not denom > 0:
        raise ValueError(f"xi={xi} too large for p={p}: denominator {denom:.3g} <= 0")
    return lift / denom


def recovery_error_bound(delta, kappa, gamma, s, n, y_norm, p) -> float:
    """l1 error guaranteed for a given ``delta``; inverse of :func:`delta_bound`."""
    if not kappa < 0.5:
        raise TheoremInapplicableError(f"kappa={kappa} >= 1/2")
    return (p ** (delta / (1 + delta)) - 1) / (1 - 2 * kappa) * math.sqrt(s / (n * gamma)) * y_norm


@dataclass(frozen=True)
class RecoveryCertificate:
    kappa: float
    gamma: float
    s: int
    delta_max: float
    predicted_xi: float

    @property
    def s_good(self) -> bool:
        return self.kappa < 0.5


def recovery_certificate(prob: DesignProblem, s: int, xi: float, threads: int = 1) -> RecoveryCertificate:
    """Certify kappa and gamma exhaustively and derive the admissible ``delta``.

    Raises :class:`TheoremInapplicableError` when kappa >= 1/2 or gamma = 0.
    """
    kappa = check_s_good(prob, s, threads=threads)
    gamma = re_constant(prob, s, threads=threads)
    if not kappa < 0.5:
        raise TheoremInapplicableError(f"kappa={kappa:.6g} >= 1/2; X is not s-good for s={s}")
    if not gamma > 0:
        raise TheoremInapplicableError(f"gamma={gamma:.3g}: restricted eigenvalue condition fails")
    y_norm = float(np.linalg.norm(prob.y))
    dmax = delta_bound(xi, kappa, gamma, s, prob.n, y_norm, prob.p)
    return RecoveryCertificate(kappa=kappa, gamma=gamma, s=int(s), delta_max=dmax, predicted_xi=float(xi))

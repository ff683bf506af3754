"""Dense two-phase simplex with Bland's rule, for small equality-form LPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LPResult:
    x: np.ndarray
    value: float
    basis: np.ndarray
    iterations: int


def _pivot(t, row, col):
    t[row] /= t[row, col]
    for k in range(t.shape[0]):
        if k != row and t[k, col] != 0.0:
            t[k] -= t[k, col] * t[row]


def _bland(t, basis, allowed, tol, max_iter):
    """Run Bland-rule pivots on tableau ``t`` (last row = reduced costs, last column = rhs)."""
    m = t.shape[0] - 1
    for it in range(max_iter):
        cost = t[-1, :-1]
        entering = next((j for j in range(cost.size) if allowed[j] and cost[j] < -tol), None)
        if entering is None:
            return it
        col = t[:m, entering]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            raise LPError("linear program is unbounded")
        ratios = t[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        leave = min(ties, key=lambda r: basis[r])
        _pivot(t, leave, entering)
        basis[leave] = entering
    raise LPError(f"simplex did not terminate in {max_iter} pivots")


def simplex(c, a_eq, b_eq, tol: float = 1e-11, max_iter: int = 50_000) -> LPResult:
    """Minimise ``c @ x`` subject to ``a_eq @ x = b_eq`` and ``x >= 0``.

    Phase one minimises the sum of artificial variables; artificials left in
    the basis at level zero are pivoted out (or their redundant rows dropped)
    before phase two. The reported point is recomputed from the final basis
    by a direct solve against the original data.
    """
    c = np.asarray(c, dtype=float)
    a = np.array(a_eq, dtype=float, ndmin=2)
    b = np.array(b_eq, dtype=float).reshape(-1)
    m, nv = a.shape
    flip = b < 0
    a[flip] *= -1
    b[flip] *= -1
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))

    # phase one
    t = np.zeros((m + 1, nv + m + 1))
    t[:m, :nv] = a
    t[:m, nv:nv + m] = np.eye(m)
    t[:m, -1] = b
    t[-1, :nv] = -a.sum(axis=0)
    t[-1, -1] = -b.sum()
    basis = list(range(nv, nv + m))
    allowed = np.ones(nv + m, dtype=bool)
    it1 = _bland(t, basis, allowed, tol * scale, max_iter)
    if -t[-1, -1] > 1e-9 * scale * max(1.0, m):
        raise LPError(f"linear program is infeasible (phase-one value {-t[-1, -1]:.3e})")

    keep = []
    for r in range(m):
        if basis[r] >= nv:
            cands = np.flatnonzero(np.abs(t[r, :nv]) > tol * scale)
            if cands.size == 0:
                continue  # redundant constraint
            _pivot(t, r, int(cands[0]))
            basis[r] = int(cands[0])
        keep.append(r)

    # phase two on the surviving rows, artificial columns dropped
    t2 = np.zeros((len(keep) + 1, nv + 1))
    t2[:-1, :nv] = t[keep, :nv]
    t2[:-1, -1] = t[keep, -1]
    basis = [basis[r] for r in keep]
    t2[-1, :nv] = c
    for r, j in enumerate(basis):
        t2[-1] -= c[j] * t2[r]
    it2 = _bland(t2, basis, np.ones(nv, dtype=bool), tol * scale, max_iter)

    basis = np.array(basis)
    x = np.zeros(nv)
    ab = a[:, basis]
    sol, *_ = np.linalg.lstsq(ab, b, rcond=None)
    x[basis] = np.maximum(sol, 0.0)
    return LPResult(x=x, value=float(c @ x), basis=basis, iterations=it1 + it2)

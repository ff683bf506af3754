"""Independent solvers for the interpolants that VRSMD should converge to."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import DesignProblem
from ..mirror import MirrorDomainError, MirrorMap, QuadraticForm, SquaredL2

ORACLE_RTOL = 1e-9


class InterpolantConvergenceError(RuntimeError):
    def __init__(self, message, best_residual=None, best_beta=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_beta = best_beta


@dataclass(frozen=True, eq=False)
class InterpolantCertificate:
    """Minimum-psi interpolant together with its optimality residuals.

    ``feasibility_residual`` is ``||X b - P_col(X) y||``; ``dual_range_residual``
    is the distance of ``grad psi(b)`` from col(X^T). Both vanish exactly at
    the minimizer of psi over the least-squares solution set.
    """

    beta_star: np.ndarray
    dual_coeff: np.ndarray
    dual_point: np.ndarray
    feasibility_residual: float
    dual_range_residual: float
    psi_value: float
    iterations: int
    method: str

    def within(self, prob: DesignProblem, rtol: float = ORACLE_RTOL) -> bool:
        b = np.linalg.norm(prob.projected_response())
        g = np.linalg.norm(self.dual_point) if self.dual_point.size else 0.0
        return self.feasibility_residual <= rtol * max(1.0, b) and self.dual_range_residual <= rtol * max(1.0, g)


def min_l2_interpolant(prob: DesignProblem) -> np.ndarray:
    """Pseudoinverse solution ``X^+ y`` from the cached SVD."""
    sp = prob.spectral
    return sp.row_basis @ ((sp.col_basis.T @ prob.y) / sp.singular_values)


def _certify(prob, psi, beta, dual, iterations, method):
    sp = prob.spectral
    feas = float(np.linalg.norm(prob.x_matrix @ beta - prob.projected_response()))
    try:
        g = psi.grad(beta)
    except MirrorDomainError:
        g = dual
    dual_res = float(np.linalg.norm(sp.null_component(g)))
    # a = U S^{-1} V^T u reproduces X^T a = u for u in col(X^T)
    coeff = sp.col_basis @ ((sp.row_basis.T @ dual) / sp.singular_values)
    return InterpolantCertificate(
        beta_star=beta,
        dual_coeff=coeff,
        dual_point=np.asarray(dual, dtype=float),
        feasibility_residual=feas,
        dual_range_residual=dual_res,
        psi_value=psi.psi(beta),
        iterations=iterations,
        method=method,
    )


class _Dual:
    """phi(w) = psi*(V w) - <w, z>; minimizing it gives V^T grad psi*(V w) = z."""

    def __init__(self, prob, psi):
        sp = prob.spectral
        self.v = sp.row_basis
        self.z = (sp.col_basis.T @ prob.y) / sp.singular_values
        self.psi = psi

    def value(self, w):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.psi.conjugate(self.v @ w) - float(w @ self.z)

    def grad(self, w):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.v.T @ self.psi.grad_inverse(self.v @ w) - self.z

    def hess(self, w):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.v.T @ self.psi.conjugate_hessian(self.v @ w) @ self.v


def _newton(dual: _Dual, tol: float, max_iter: int):
    r = dual.z.size
    w = np.zeros(r)
    f = dual.value(w)
    g = dual.grad(w)
    gn = float(np.linalg.norm(g))
    best = (gn, w)
    for it in range(1, max_iter + 1):
        if gn <= tol:
            return w, it - 1, gn
        h = dual.hess(w)
        if not np.all(np.isfinite(h)):
            break
        # regularisation proportional to the gradient norm keeps the step
        # bounded where the conjugate is flat (e.g. power maps near zero)
        d = np.linalg.solve(h + gn * np.eye(r), -g)
        slope = float(g @ d)
        step = 1.0
        accepted = False
        for _ in range(60):
            w_new = w + step * d
            f_new = dual.value(w_new)
            if np.isfinite(f_new):
                g_new = dual.grad(w_new)
                gn_new = float(np.linalg.norm(g_new))
                if f_new <= f + 1e-4 * step * slope or (f_new <= f + 1e-12 * abs(f) and gn_new < gn):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        w, f, g, gn = w_new, f_new, g_new, gn_new
        if gn < best[0]:
            best = (gn, w)
    return best[1], it, best[0]


def _dual_gradient_descent(dual: _Dual, tol: float, max_iter: int, w0=None):
    """Full-batch mirror descent, viewed as gradient descent on the dual, with backtracking."""
    w = np.zeros(dual.z.size) if w0 is None else w0.copy()
    f = dual.value(w)
    g = dual.grad(w)
    gn = float(np.linalg.norm(g))
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        if gn <= tol:
            break
        while True:
            w_new = w - step * g
            f_new = dual.value(w_new)
            if np.isfinite(f_new) and f_new <= f - 0.5 * step * gn * gn:
                break
            if f_new == -np.inf:
                return w, it, gn
            step *= 0.5
            if step < 1e-300:
                return w, it, gn
        w, f = w_new, f_new
        if f < -1e15 * max(1.0, float(np.linalg.norm(dual.z))):
            # dual unbounded below: no feasible point in the map's domain
            return w, it, gn
        g = dual.grad(w)
        gn = float(np.linalg.norm(g))
        step *= 2.0
    return w, it, gn


def min_mirror_interpolant(
    prob: DesignProblem,
    psi: MirrorMap,
    rtol: float = ORACLE_RTOL,
    max_iter: int = 500,
    fallback_iter: int = 100_000,
) -> InterpolantCertificate:
    """argmin psi(b) subject to ``X b = P_col(X) y``.

    Solved in the dual: with ``grad psi(b) = X^T a`` the constraint becomes a
    smooth convex minimization over ``a`` (parametrised by ``w = S U^T a``),
    handled by regularised Newton with backtracking. If Newton stalls, full
    batch mirror descent on the dual takes over.

    Raises
    ------
    InterpolantConvergenceError
        If neither method reaches the tolerance; carries the best residual.
    """
    if isinstance(psi, SquaredL2):
        beta = min_l2_interpolant(prob)
        return _certify(prob, psi, beta, prob.spectral.row_component(beta), 0, "pinv")
    dual = _Dual(prob, psi)
    # ||X b - P y|| <= s_max * ||V^T b - z||, so tighten by s_max to certify in data space
    tol = 0.5 * rtol * max(1.0, float(np.linalg.norm(prob.projected_response()))) / prob.spectral.s_max
    w, it, gn = _newton(dual, tol, max_iter)
    method = "newton"
    if not gn <= tol:
        w, it2, gn = _dual_gradient_descent(dual, tol, fallback_iter, w0=w)
        it += it2
        method = "newton+dual-md"
    u = dual.v @ w
    beta = psi.grad_inverse(u)
    if not (gn <= tol and np.all(np.isfinite(beta))):
        raise InterpolantConvergenceError(
            f"minimum-psi interpolant did not converge for {psi.spec()}: "
            f"constraint residual {gn:.3e} > {tol:.3e} (infeasible domain or ill-conditioning)",
            best_residual=gn, best_beta=beta,
        )
    return _certify(prob, psi, beta, u, it, method)


def primal_newton_interpolant(prob: DesignProblem, psi: MirrorMap, max_iter: int = 500, tol: float = 1e-14) -> np.ndarray:
    """Minimise psi over ``{b : X b = P_col(X) y}`` directly in the primal.

    Works in null-space coordinates ``b = b0 + N c`` from the minimum-norm
    point ``b0`` and takes damped Newton steps on ``c``, using the primal
    Hessian of psi. It shares nothing with the dual route of
    :func:`min_mirror_interpolant`, which is what makes it a useful cross-check.
    Needs ``psi.hessian_diag`` (the separable maps) or ``psi.h``.
    """
    sp = prob.spectral
    beta = min_l2_interpolant(prob)
    nb = sp.null_basis
    if nb.shape[1] == 0:
        return beta
    f = psi.psi(beta)
    for _ in range(max_iter):
        g = nb.T @ psi.grad(beta)
        if isinstance(psi, QuadraticForm):
            h = 2.0 * nb.T @ psi.h @ nb
        else:
            # exact zeros make the power-map curvature infinite
            h = (nb.T * np.minimum(psi.hessian_diag(beta), 1e12)) @ nb
        d = nb @ np.linalg.solve(h, -g)
        slope = float(g @ (nb.T @ d))
        if -slope <= tol * max(1.0, abs(f)):
            break
        step = 1.0
        while True:
            cand = beta + step * d
            try:
                fc = psi.psi(cand)
            except MirrorDomainError:
                fc = np.inf
            if fc <= f + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-16:
                return beta
        beta, f = cand, fc
    return beta


"""Mirror maps and the Bregman divergence they induce.

Every map exposes ``psi``, ``grad`` and ``grad_inverse`` plus the constants
used by the step-size and rate calculators. The separable maps also expose
``conjugate`` (the convex conjugate psi*) and ``grad_inverse_derivative``
(the diagonal of the Hessian of psi*), which the dual interpolant solver uses.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


class MirrorDomainError(ValueError):
    """A point lies outside the domain of a mirror map."""


class MirrorMap:
    name = "abstract"

    def psi(self, beta):
        raise NotImplementedError

    def grad(self, beta):
        raise NotImplementedError

    def grad_inverse(self, u):
        raise NotImplementedError

    def conjugate(self, u):
        """psi*(u) = <u, b> - psi(b) with b = grad_inverse(u)."""
        b = self.grad_inverse(u)
        return float(np.dot(u, b)) - self.psi(b)

    def conjugate_hessian(self, u):
        """Hessian of psi* at ``u`` as a dense matrix."""
        return np.diag(self.grad_inverse_derivative(u))

    def grad_inverse_derivative(self, u):
        raise NotImplementedError

    def strong_convexity_alpha(self, radius=None) -> float:
        raise NotImplementedError

    def smoothness_ell(self, radius=None, lower=None) -> float:
        raise NotImplementedError

    def minimizer(self, p: int) -> np.ndarray:
        """argmin psi, i.e. grad_inverse(0)."""
        return self.grad_inverse(np.zeros(p))

    def check_domain(self, beta) -> None:
        pass

    def spec(self) -> str:
        return self.name

    def __repr__(self):
        return f"{type(self).__name__}({self.spec()!r})"


class SquaredL2(MirrorMap):
    """psi = ||b||^2 / 2; mirror descent with it is plain (stochastic) gradient descent."""

    name = "l2"

    def psi(self, beta):
        beta = np.asarray(beta, dtype=float)
        return 0.5 * float(beta @ beta)

    def grad(self, beta):
        return np.array(beta, dtype=float)

    def grad_inverse(self, u):
        # identity; no copy, callers never mutate iterates in place
        return np.asarray(u, dtype=float)

    def grad_inverse_derivative(self, u):
        return np.ones_like(np.asarray(u, dtype=float))

    def hessian_diag(self, beta):
        return np.ones_like(np.asarray(beta, dtype=float))

    def strong_convexity_alpha(self, radius=None):
        return 1.0

    def smoothness_ell(self, radius=None, lower=None):
        return 1.0


class PowerNorm(MirrorMap):
    """psi = ||b||_{1+delta}^{1+delta} = sum |b_i|^{1+delta}.

    Small ``delta`` approaches the l1 norm. For ``delta < 1`` the curvature
    (1+delta) delta |b_i|^{delta-1} is infinite at exact zeros, so the
    smoothness constant is only finite on ``|b_i| >= lower``; the strong
    convexity constant holds on the box ``||b||_inf <= K``.
    """

    def __init__(self, delta: float):
        delta = float(delta)
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta}")
        self.delta = delta
        self.q = 1.0 + delta
        self._inv_delta = 1.0 / delta

    @property
    def name(self):
        return f"power:{self.delta:g}"

    def psi(self, beta):
        return float(np.sum(np.abs(np.asarray(beta, dtype=float)) ** self.q))

    def grad(self, beta):
        beta = np.asarray(beta, dtype=float)
        return self.q * np.sign(beta) * np.abs(beta) ** self.delta

    def grad_inverse(self, u):
        u = np.asarray(u, dtype=float)
        return np.copysign((np.abs(u) / self.q) ** self._inv_delta, u)

    def hessian_diag(self, beta):
        with np.errstate(divide="ignore"):
            return self.q * self.delta * np.abs(np.asarray(beta, dtype=float)) ** (self.delta - 1.0)

    def grad_inverse_derivative(self, u):
        a = np.abs(np.asarray(u, dtype=float)) / self.q
        with np.errstate(divide="ignore"):
            return a ** (1.0 / self.delta - 1.0) / (self.delta * self.q)

    def conjugate(self, u):
        # psi*(u) = delta * sum (|u|/q)^{q/delta}
        a = np.abs(np.asarray(u, dtype=float)) / self.q
        return self.delta * float(np.sum(a ** (self.q / self.delta)))

    def strong_convexity_alpha(self, radius=None):
        if radius is None or not radius > 0:
            raise ValueError(f"radius K must be positive, got {radius}")
        if self.delta > 1:
            # curvature vanishes at the origin
            return 0.0
        return self.q * self.delta / radius ** (1.0 - self.delta)

    def smoothness_ell(self, radius=None, lower=None):
        if self.delta == 1:
            return 2.0
        if self.delta < 1:
            if lower is None:
                return math.inf
            if not lower > 0:
                raise ValueError(f"lower radius must be positive, got {lower}")
            return self.q * self.delta * lower ** (self.delta - 1.0)
        if radius is None or not radius > 0:
            raise ValueError(f"radius K must be positive, got {radius}")
        return self.q * self.delta * radius ** (self.delta - 1.0)


class QuadraticForm(MirrorMap):
    """psi = b^T H b for a symmetric positive definite ``H``."""

    def __init__(self, h, label: str = "quad"):
        h = np.array(h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("H must be a square matrix")
        if not np.allclose(h, h.T, rtol=0, atol=1e-12 * max(1.0, np.abs(h).max())):
            raise ValueError("H must be symmetric")
        h = 0.5 * (h + h.T)
        eig = np.linalg.eigvalsh(h)
        if eig[0] <= 0:
            raise ValueError("H must be positive definite")
        self.h = h
        self._eig = eig
        self._chol = np.linalg.cholesky(h)
        self._label = label

    @property
    def name(self):
        return self._label

    def psi(self, beta):
        beta = np.asarray(beta, dtype=float)
        return float(beta @ self.h @ beta)

    def grad(self, beta):
        return 2.0 * self.h @ np.asarray(beta, dtype=float)

    def grad_inverse(self, u):
        u = np.asarray(u, dtype=float)
        z = np.linalg.solve(self._chol, u)
        return 0.5 * np.linalg.solve(self._chol.T, z)

    def conjugate(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * float(u @ self.grad_inverse(u))

    def conjugate_hessian(self, u):
        return 0.5 * np.linalg.inv(self.h)

    def strong_convexity_alpha(self, radius=None):
        return 2.0 * float(self._eig[0])

    def smoothness_ell(self, radius=None, lower=None):
        return 2.0 * float(self._eig[-1])


class NegativeEntropy(MirrorMap):
    """psi = sum b_i log b_i - b_i on the open positive orthant."""

    name = "entropy"

    def check_domain(self, beta):
        beta = np.asarray(beta, dtype=float)
        if not np.all(beta > 0):
            bad = np.flatnonzero(~(beta > 0))
            raise MirrorDomainError(
                f"negative entropy needs strictly positive entries; "
                f"coordinates {bad[:10].tolist()} have values {beta[bad[:10]].tolist()}"
            )

    def psi(self, beta):
        beta = np.asarray(beta, dtype=float)
        self.check_domain(beta)
        return float(np.sum(beta * np.log(beta) - beta))

    def grad(self, beta):
        beta = np.asarray(beta, dtype=float)
        self.check_domain(beta)
        return np.log(beta)

    def grad_inverse(self, u):
        return np.exp(np.asarray(u, dtype=float))

    def grad_inverse_derivative(self, u):
        return np.exp(np.asarray(u, dtype=float))

    def hessian_diag(self, beta):
        beta = np.asarray(beta, dtype=float)
        self.check_domain(beta)
        return 1.0 / beta

    def conjugate(self, u):
        return float(np.sum(np.exp(np.asarray(u, dtype=float))))

    def strong_convexity_alpha(self, radius=None):
        if radius is None or not radius > 0:
            raise ValueError(f"radius K must be positive, got {radius}")
        return 1.0 / radius

    def smoothness_ell(self, radius=None, lower=None):
        if lower is None:
            return math.inf
        if not lower > 0:
            raise ValueError(f"lower radius must be positive, got {lower}")
        return 1.0 / lower


def bregman_divergence(psi: MirrorMap, u, w) -> float:
    """D_psi(u, w) = psi(u) - psi(w) - <grad psi(w), u - w>."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.shape != w.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {w.shape}")
    psi.check_domain(u)
    psi.check_domain(w)
    return psi.psi(u) - psi.psi(w) - float(psi.grad(w) @ (u - w))


def parse_mirror(text: str) -> MirrorMap:
    """Build a map from ``l2``, ``power:<delta>``, ``quad:<H.csv>`` or ``entropy``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "l2":
        return SquaredL2()
    if kind == "entropy":
        return NegativeEntropy()
    if kind == "power":
        if not arg:
            raise ValueError("power mirror needs a delta, e.g. power:0.1")
        return PowerNorm(float(arg))
    if kind == "quad":
        if not arg:
            raise ValueError("quad mirror needs a matrix file, e.g. quad:H.csv")
        h = np.loadtxt(Path(arg), delimiter=",", ndmin=2)
        return QuadraticForm(h, label=f"quad:{arg}")
    raise ValueError(f"unknown mirror map {text!r}")

"""Rate constants and right-hand sides of the VRSMD convergence bounds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..core import DesignProblem, objective_value
from ..mirror import MirrorMap


class RateRegimeError(ValueError):
    """Step size too large for the linear-rate constants to be defined."""


class MissingConstantError(ValueError):
    pass


def tau_general(alpha, L, eta, m, ell, mu) -> float:
    """``(12 L eta^2/alpha + ell/(m mu)) / (eta - 12 L eta^2/alpha)`` for a QG constant ``mu``."""
    a = 12.0 * L * eta * eta / alpha
    den = eta - a
    if not den > 0:
        raise RateRegimeError(f"eta too large for linear-rate regime: eta={eta:g} >= alpha/(12L)={alpha / (12 * L):.4g}")
    return (a + ell / (m * mu)) / den


def tau_interpolant(alpha, L, eta, m, ell, n, s_m) -> float:
    """The least-squares specialisation of :func:`tau_general` with ``mu = s_m^2 / n``."""
    a = 12.0 * L * eta * eta / alpha
    den = eta - a
    if not den > 0:
        raise RateRegimeError(f"eta too large for linear-rate regime: eta={eta:g} >= alpha/(12L)={alpha / (12 * L):.4g}")
    return (a + ell * n / (m * s_m * s_m)) / den


def tau_l2(L, eta, m, n, s_m) -> float:
    """Rate of SVRG towards the pseudoinverse solution (``alpha = ell = 1``)."""
    a = 12.0 * L * eta * eta
    den = eta - a
    if not den > 0:
        raise RateRegimeError(f"eta too large for linear-rate regime: eta={eta:g} >= 1/(12L)={1 / (12 * L):.4g}")
    return (a + n / (m * s_m * s_m)) / den


@dataclass(frozen=True)
class ConvergenceConstants:
    tau: float
    tau_prime: float
    tau_double_prime: float
    mu_ls: float
    alpha: float
    ell: float
    L: float

    def as_dict(self):
        return asdict(self)


def convergence_constants(
    prob: DesignProblem, psi: MirrorMap, cfg, mu=None, ell=None, radius=None, lower=None
) -> ConvergenceConstants:
    """Evaluate ``(tau, tau', tau'')`` for a problem, mirror map and step/inner-loop choice.

    ``mu`` defaults to the least-squares QG constant ``s_m^2/n``. ``ell``
    defaults to the map's smoothness on the given radii; when it is
    unbounded (power maps with ``delta < 1`` and no ``lower``) ``tau`` and
    ``tau'`` are reported as ``inf``. ``tau''`` depends only on the data.
    """
    L = prob.smoothness_l
    n, s_m = prob.n, prob.s_m
    mu_ls = s_m * s_m / n
    if mu is None:
        mu = mu_ls
    alpha = psi.strong_convexity_alpha(radius)
    if ell is None:
        ell = psi.smoothness_ell(radius, lower)
    eta, m = cfg.eta, cfg.m
    if not alpha > 0:
        raise RateRegimeError(f"mirror map {psi.spec()} has no positive strong-convexity constant on radius {radius}")
    if math.isinf(ell):
        # still enforce the step-size condition
        tau_general(alpha, L, eta, m, 1.0, mu)
        tau = tau_p = math.inf
    else:
        tau = tau_general(alpha, L, eta, m, ell, mu)
        tau_p = tau_interpolant(alpha, L, eta, m, ell, n, s_m)
    tau_pp = tau_l2(L, eta, m, n, s_m)
    return ConvergenceConstants(tau, tau_p, tau_pp, mu_ls, float(alpha), float(ell), float(L))


def _need(inputs, *names):
    missing = [k for k in names if inputs.get(k) is None]
    if missing:
        raise MissingConstantError(f"missing constant(s): {', '.join(missing)}")
    return [float(inputs[k]) for k in names]


def _horizon(inputs):
    if inputs.get("T") is not None:
        return float(inputs["T"])
    m, S = _need(inputs, "m", "S")
    return m * S


def _sublinear(inputs, c):
    alpha, L, eta, m, D, gap0 = _need(inputs, "alpha", "L", "eta", "m", "bregman", "gap0")
    T = _horizon(inputs)
    den = (alpha * eta - c * L * eta * eta) * T
    if not den > 0:
        raise RateRegimeError(f"alpha*eta - {c:g}*L*eta^2 must be positive")
    return alpha / den * (D + 12.0 * L * eta * eta * m / alpha * gap0)


def _rate(inputs, which):
    if inputs.get("tau") is not None:
        return float(inputs["tau"])
    if which == "general":
        return tau_general(*_need(inputs, "alpha", "L", "eta", "m", "ell", "mu"))
    if which == "interpolant":
        return tau_interpolant(*_need(inputs, "alpha", "L", "eta", "m", "ell", "n", "s_m"))
    return tau_l2(*_need(inputs, "L", "eta", "m", "n", "s_m"))


def _sublinear_psi_gap_interpolant(inputs):
    alpha, L, eta, m, D, gap0, B, n, s_m = _need(
        inputs, "alpha", "L", "eta", "m", "bregman", "gap0", "B", "n", "s_m"
    )
    T = _horizon(inputs)
    den = (alpha * eta - 24.0 * L * eta * eta) * T
    if not den > 0:
        raise RateRegimeError("alpha*eta - 24*L*eta^2 must be positive")
    inner = 2.0 * n * D + 24.0 * n * L * eta * eta * m / alpha * gap0
    return B / s_m * math.sqrt(alpha / den) * math.sqrt(inner)


def _linear_f_gap(inputs):
    (gap0, S) = _need(inputs, "gap0", "S")
    return _rate(inputs, "general") ** S * gap0


def _linear_psi_gap_interpolant(inputs):
    B, n, s_m, gap0, S = _need(inputs, "B", "n", "s_m", "gap0", "S")
    return B * _rate(inputs, "interpolant") ** (S / 2.0) * math.sqrt(2.0 * n) / s_m * math.sqrt(gap0)


def _linear_f_gap_interpolant(inputs):
    gap0, S = _need(inputs, "gap0", "S")
    return _rate(inputs, "interpolant") ** S * gap0


def _linear_pinv_distance(inputs):
    S, s_m, yc = _need(inputs, "S", "s_m", "proj_y_norm_sq")
    return _rate(inputs, "l2") ** S / (s_m * s_m) * yc


BOUND_KINDS = {
    # option I, any mirror map
    "sublinear_f_gap": lambda k: _sublinear(k, 24.0),
    # option II under quadratic growth
    "linear_f_gap": _linear_f_gap,
    # distances to the minimum-psi interpolant
    "sublinear_psi_gap_interpolant": _sublinear_psi_gap_interpolant,
    "sublinear_f_gap_interpolant": lambda k: _sublinear(k, 8.0),  # 8 L eta^2, not 24
    "linear_psi_gap_interpolant": _linear_psi_gap_interpolant,
    "linear_f_gap_interpolant": _linear_f_gap_interpolant,
    # squared l2 distance to X^+ y
    "linear_pinv_distance": _linear_pinv_distance,
}


def theoretical_bound_rhs(kind: str, **inputs) -> float:
    """Numeric right-hand side of the named bound.

    Recognised inputs: ``alpha, L, ell, mu, eta, m, S`` (or ``T``),
    ``bregman`` (Bregman divergence from the start to the target), ``gap0``
    (initial objective gap), ``B``, ``n``, ``s_m``, ``proj_y_norm_sq`` and an
    optional precomputed ``tau`` that overrides the rate for the linear kinds.
    """
    try:
        fn = BOUND_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown bound kind {kind!r}; choose from {sorted(BOUND_KINDS)}") from None
    return float(fn(inputs))


@dataclass(frozen=True)
class EpsilonReport:
    psi_gap: float
    f_gap: float
    epsilon: float

    @property
    def psi_ok(self) -> bool:
        return self.psi_gap <= self.epsilon

    @property
    def f_ok(self) -> bool:
        return self.f_gap <= self.epsilon

    @property
    def passed(self) -> bool:
        return self.psi_ok and self.f_ok

    @property
    def psi_margin(self) -> float:
        return self.epsilon - self.psi_gap

    @property
    def f_margin(self) -> float:
        return self.epsilon - self.f_gap

    def as_dict(self):
        return {
            "psi_gap": self.psi_gap, "f_gap": self.f_gap, "epsilon": self.epsilon,
            "psi_ok": self.psi_ok, "f_ok": self.f_ok, "passed": self.passed,
            "psi_margin": self.psi_margin, "f_margin": self.f_margin,
        }


def epsilon_solution_check(prob: DesignProblem, psi: MirrorMap, beta, interpolant, epsilon: float) -> EpsilonReport:
    """Compare ``beta`` against the minimum-psi interpolant in psi value and in objective.

    ``psi_gap`` may be negative: a point that does not interpolate can have
    smaller psi than the constrained minimiser.
    """
    ref = interpolant.beta_star
    return EpsilonReport(
        psi_gap=psi.psi(beta) - psi.psi(ref),
        f_gap=objective_value(prob, beta) - objective_value(prob, ref),
        epsilon=float(epsilon),
    )

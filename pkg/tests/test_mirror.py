import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vrsmd.mirror import (
    MirrorDomainError,
    NegativeEntropy,
    PowerNorm,
    QuadraticForm,
    SquaredL2,
    bregman_divergence,
    parse_mirror,
)

H = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
MAPS = [SquaredL2(), PowerNorm(1.0), PowerNorm(0.5), PowerNorm(0.1), PowerNorm(2.0), QuadraticForm(H), NegativeEntropy()]


def _point(psi, rng, p=3, k=2.0):
    if isinstance(psi, NegativeEntropy):
        return rng.uniform(0.05, k, p)
    return rng.uniform(-k, k, p)


def test_bregman_examples():
    assert bregman_divergence(SquaredL2(), [3, -1], [3, -1]) == 0.0
    assert bregman_divergence(SquaredL2(), [1, 0], [0, 0]) == 0.5
    assert bregman_divergence(NegativeEntropy(), [1.0], [math.e]) == pytest.approx(math.e - 2, rel=1e-14)


def test_bregman_errors():
    with pytest.raises(MirrorDomainError):
        bregman_divergence(NegativeEntropy(), [1.0, -1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        bregman_divergence(SquaredL2(), [1.0], [1.0, 2.0])


@pytest.mark.parametrize(
    "psi, beta, grad",
    [(PowerNorm(1.0), [3.0], [6.0]), (PowerNorm(0.5), [4.0], [3.0]), (NegativeEntropy(), [1.0, math.e], [0.0, 1.0])],
)
def test_gradient_examples(psi, beta, grad):
    g = psi.grad(beta)
    np.testing.assert_allclose(g, grad, rtol=1e-15, atol=1e-15)
    np.testing.assert_allclose(psi.grad_inverse(g), beta, rtol=1e-14)


def test_power_inverse_at_zero():
    np.testing.assert_array_equal(PowerNorm(0.3).grad_inverse([0.0, -0.0]), [0.0, 0.0])
    np.testing.assert_array_equal(PowerNorm(0.3).grad([0.0]), [0.0])


def test_entropy_domain():
    with pytest.raises(MirrorDomainError, match="coordinates"):
        NegativeEntropy().grad([1.0, 0.0])


def test_alpha_examples():
    assert SquaredL2().strong_convexity_alpha(7) == 1.0
    assert PowerNorm(0.5).strong_convexity_alpha(4) == pytest.approx(0.375, rel=1e-15)
    assert QuadraticForm(np.diag([1.0, 3.0])).strong_convexity_alpha() == pytest.approx(2.0, rel=1e-15)
    for bad in (0, -1, None):
        with pytest.raises(ValueError):
            PowerNorm(0.5).strong_convexity_alpha(bad)


def test_smoothness_constants():
    assert math.isinf(PowerNorm(0.2).smoothness_ell(3.0))
    assert PowerNorm(0.5).smoothness_ell(lower=0.25) == pytest.approx(1.5 * 0.5 / 0.5)
    assert PowerNorm(1.0).smoothness_ell() == 2.0
    assert math.isinf(NegativeEntropy().smoothness_ell(1.0))
    assert QuadraticForm(np.diag([1.0, 3.0])).smoothness_ell() == pytest.approx(6.0)


@pytest.mark.parametrize("psi", MAPS, ids=lambda m: m.spec())
def test_round_trip(psi):
    rng = np.random.default_rng(0)
    for _ in range(100):
        b = _point(psi, rng)
        np.testing.assert_allclose(psi.grad_inverse(psi.grad(b)), b, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("psi", MAPS, ids=lambda m: m.spec())
def test_gradient_finite_difference(psi):
    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(20):
        b = _point(psi, rng) + 0.1 * np.sign(_point(psi, rng))
        if isinstance(psi, NegativeEntropy):
            b = np.abs(b) + 0.1
        d = rng.standard_normal(b.size)
        fd = (psi.psi(b + h * d) - psi.psi(b - h * d)) / (2 * h)
        exact = psi.grad(b) @ d
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


@pytest.mark.parametrize("psi", MAPS, ids=lambda m: m.spec())
def test_strong_convexity_sampled(psi):
    rng = np.random.default_rng(2)
    K = 2.0
    alpha = psi.strong_convexity_alpha(K)
    for _ in range(100):
        u, w = _point(psi, rng, k=K), _point(psi, rng, k=K)
        lower = psi.psi(w) + psi.grad(w) @ (u - w) + 0.5 * alpha * np.sum((u - w) ** 2)
        assert psi.psi(u) >= lower - 1e-9


@pytest.mark.parametrize("psi", MAPS, ids=lambda m: m.spec())
def test_bregman_positive(psi):
    rng = np.random.default_rng(3)
    for _ in range(100):
        u, w = _point(psi, rng), _point(psi, rng)
        assert bregman_divergence(psi, u, w) > 0
        assert bregman_divergence(psi, u, u) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 3.0), st.lists(st.floats(-50, 50), min_size=1, max_size=6))
def test_power_conjugate_is_fenchel(delta, u):
    psi = PowerNorm(delta)
    u = np.array(u)
    b = psi.grad_inverse(u)
    assert psi.conjugate(u) == pytest.approx(float(u @ b) - psi.psi(b), rel=1e-9, abs=1e-9)


def test_power_l1_limit():
    b = np.array([0.3, -2.0, 0.0, 5.0])
    l1 = np.abs(b).sum()
    gaps = [abs(PowerNorm(d).psi(b) - l1) for d in (1e-1, 1e-2, 1e-3)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_quadratic_validation():
    with pytest.raises(ValueError):
        QuadraticForm(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        QuadraticForm(np.diag([1.0, -1.0]))


def test_parse_mirror(tmp_path):
    assert isinstance(parse_mirror("l2"), SquaredL2)
    assert parse_mirror("power:0.25").delta == 0.25
    assert isinstance(parse_mirror("entropy"), NegativeEntropy)
    path = tmp_path / "h.csv"
    np.savetxt(path, H, delimiter=",")
    q = parse_mirror(f"quad:{path}")
    np.testing.assert_allclose(q.h, H)
    for bad in ("power", "power:-1", "nope", "quad"):
        with pytest.raises(ValueError):
            parse_mirror(bad)

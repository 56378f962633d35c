"""Tests for the log-Bessel / digamma / SPD factorization kernels.

Frozen reference values were produced by independent oracles noted next to
each constant: adaptive quadrature of the Bessel integral representation
K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, the digamma asymptotic
series with Bernoulli-number tail, and a cofactor expansion for the 3x3
log-determinant.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mvcwm.specialfn import (
    NotPositiveDefiniteError,
    SpdFactor,
    digamma,
    dlog_bessel_k_dorder,
    log_bessel_k,
    spd_factorize,
)

# quad(exp(-10 cosh t) cosh(3.2 t), t=0..30), epsabs=1e-18 -> log of the integral
LOG_K_3P2_10 = -10.451905356392693
# quad ratio dK/dnu / K at (nu=1, x=3) with dK/dnu = int exp(-x cosh t) t sinh(nu t) dt
DLOGK_1_3 = 0.28836812610312157
# digamma asymptotic series: ln x - 1/(2x) - sum B_2n / (2n x^2n), x = 37.5
DIGAMMA_37P5 = 3.6109483445963386
# cofactor expansion of det [[1,.8,.64],[.8,1,.8],[.64,.8,1]]
LOGDET_AR3 = -2.0433024950639633
AR3 = np.array([[1.0, 0.8, 0.64], [0.8, 1.0, 0.8], [0.64, 0.8, 1.0]])


def test_log_bessel_k_half_order_closed_form():
    # K_{1/2}(x) = sqrt(pi / (2x)) * exp(-x)
    for x in [0.05, 0.7, 3.0, 40.0, 900.0]:
        expected = 0.5 * math.log(math.pi / (2.0 * x)) - x
        assert_allclose(log_bessel_k(0.5, x), expected, rtol=1e-13)


def test_log_bessel_k_symmetric_in_order():
    for nu in [0.3, 1.0, 4.7, 60.0]:
        for x in [0.01, 1.0, 35.0]:
            assert log_bessel_k(nu, x) == log_bessel_k(-nu, x)


def test_log_bessel_k_quadrature_value():
    assert_allclose(log_bessel_k(3.2, 10.0), LOG_K_3P2_10, rtol=1e-10)


def test_log_bessel_k_matches_quadrature_on_moderate_grid():
    from scipy import integrate

    for nu in [0.0, 0.5, 1.7, 6.0, 12.3]:
        for x in [0.2, 2.0, 15.0]:
            val, _ = integrate.quad(
                lambda t: math.exp(-x * math.cosh(t)) * math.cosh(nu * t), 0, 40, limit=400
            )
            assert_allclose(log_bessel_k(nu, x), math.log(val), rtol=1e-9)


def test_log_bessel_k_finite_on_contract_grid():
    orders = [0.0, 0.5, 1.0, 3.2, 10.0, 100.0, 517.3, 1000.0]
    args = [1e-10, 1e-3, 0.1, 1.0, 10.0, 100.0, 1e4]
    for nu in orders:
        for x in args:
            val = log_bessel_k(nu, x)
            assert np.isfinite(val), (nu, x)


def test_log_bessel_k_recurrence_identity():
    # K_{nu+1}(x) = K_{nu-1}(x) + (2 nu / x) K_nu(x), checked in log space
    for nu in [1.0, 2.5, 40.0, 300.0]:
        for x in [0.05, 1.0, 50.0]:
            lhs = log_bessel_k(nu + 1.0, x)
            rhs = np.logaddexp(
                log_bessel_k(nu - 1.0, x),
                math.log(2.0 * nu / x) + log_bessel_k(nu, x),
            )
            assert_allclose(lhs, rhs, rtol=1e-10)


def test_log_bessel_k_increasing_in_order():
    # For fixed argument, K_nu(x) grows with |nu|
    for x in [0.01, 1.0, 200.0]:
        vals = [log_bessel_k(nu, x) for nu in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 101.5, 1000.0]]
        assert np.all(np.diff(vals) > 0.0), x


def test_log_bessel_k_vectorized_argument():
    xs = np.array([0.3, 1.0, 7.7, 1e4])
    vec = log_bessel_k(2.2, xs)
    scalar = np.array([log_bessel_k(2.2, float(x)) for x in xs])
    assert_allclose(vec, scalar, rtol=0.0, atol=0.0)


def test_log_bessel_k_rejects_bad_argument():
    with pytest.raises(ValueError):
        log_bessel_k(1.0, 0.0)
    with pytest.raises(ValueError):
        log_bessel_k(1.0, -3.0)
    with pytest.raises(ValueError):
        log_bessel_k(1.0, np.nan)


def test_dlog_bessel_k_dorder_quadrature_value():
    assert_allclose(dlog_bessel_k_dorder(1.0, 3.0), DLOGK_1_3, rtol=1e-8)


def test_dlog_bessel_k_dorder_zero_at_zero_order():
    # K is even in the order, so the derivative vanishes at 0
    assert dlog_bessel_k_dorder(0.0, 2.5) == 0.0


def test_dlog_bessel_k_dorder_odd_in_order():
    for nu, x in [(0.7, 1.0), (3.0, 12.0)]:
        assert_allclose(
            dlog_bessel_k_dorder(-nu, x), -dlog_bessel_k_dorder(nu, x), rtol=1e-10
        )


def test_digamma_at_one():
    assert_allclose(digamma(1.0), -0.5772156649015328606, rtol=1e-13)


def test_digamma_series_value():
    assert_allclose(digamma(37.5), DIGAMMA_37P5, rtol=1e-12)


def test_digamma_recurrence():
    # psi(x + 1) = psi(x) + 1/x
    for x in [0.1, 0.9, 3.7, 81.0]:
        assert_allclose(digamma(x + 1.0), digamma(x) + 1.0 / x, rtol=1e-12)


def test_digamma_rejects_nonpositive():
    with pytest.raises(ValueError):
        digamma(0.0)
    with pytest.raises(ValueError):
        digamma(-1.5)


def test_spd_factorize_identity():
    f = spd_factorize(np.eye(4))
    assert f.logdet == 0.0
    b = np.arange(8.0).reshape(4, 2)
    assert_allclose(f.solve(b), b, rtol=0.0, atol=0.0)


def test_spd_factorize_diagonal():
    d = np.diag([2.0, 5.0, 0.25])
    f = spd_factorize(d)
    assert_allclose(f.logdet, math.log(2.0) + math.log(5.0) + math.log(0.25), rtol=1e-14)
    assert_allclose(f.solve(np.eye(3)), np.diag([0.5, 0.2, 4.0]), rtol=1e-14)


def test_spd_factorize_cofactor_logdet():
    f = spd_factorize(AR3)
    assert_allclose(f.logdet, LOGDET_AR3, rtol=1e-12)


def test_spd_solve_round_trip():
    rng = np.random.default_rng(7)
    for dim in [1, 2, 5]:
        m = rng.standard_normal((dim, dim))
        a = m @ m.T + dim * np.eye(dim)
        f = spd_factorize(a)
        b = rng.standard_normal((dim, 3))
        assert_allclose(a @ f.solve(b), b, rtol=1e-10, atol=1e-12)


def test_spd_half_solve_whitens_quadratic_form():
    # ||L^{-1} E||_F^2 == tr(A^{-1} E E')
    rng = np.random.default_rng(11)
    m = rng.standard_normal((3, 3))
    a = m @ m.T + 3.0 * np.eye(3)
    e = rng.standard_normal((3, 4))
    f = spd_factorize(a)
    w = f.half_solve(e)
    assert_allclose(np.sum(w * w), np.trace(f.solve(e) @ e.T), rtol=1e-11)


def test_spd_factorize_reports_failing_pivot():
    bad = np.diag([1.0, 2.0, -1.0, 3.0])
    with pytest.raises(NotPositiveDefiniteError) as exc_info:
        spd_factorize(bad, name="row scale")
    assert exc_info.value.pivot == 2
    assert "row scale" in str(exc_info.value)


def test_spd_factorize_rejects_asymmetric():
    with pytest.raises(ValueError):
        spd_factorize(np.array([[1.0, 0.5], [0.2, 1.0]]))


def test_spd_factor_exposes_dimensions():
    f = spd_factorize(AR3)
    assert isinstance(f, SpdFactor)
    assert f.dim == 3
    assert f.matrix.shape == (3, 3)

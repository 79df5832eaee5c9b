import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinorbit import fourier as fr
from spinorbit.arith import cos, precision
from spinorbit.model import silver_frequency

W2 = float(silver_frequency())


def _trig(n, seed=0, decay=0.5):
    rng = np.random.default_rng(seed)
    th = np.arange(n) / n
    f = np.full(n, rng.standard_normal())
    for k in range(1, n // 4):
        a, b = rng.standard_normal(2) * decay**k
        f += a * np.cos(2 * np.pi * k * th) + b * np.sin(2 * np.pi * k * th)
    return th, f


def test_check_size():
    assert fr.check_size(64) == 64
    for bad in (0, 1, 48):
        with pytest.raises(ValueError):
            fr.check_size(bad)


def test_coefficient_convention():
    n = 16
    th = np.arange(n) / n
    c = fr.to_coeffs(np.cos(2 * np.pi * th) + 3)
    assert c[0] == pytest.approx(3)
    assert c[1] == pytest.approx(0.5) and c[-1] == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 1000))
def test_round_trip(log_n, seed):
    n = 2**log_n
    f = np.random.default_rng(seed).standard_normal(n)
    assert np.max(np.abs(fr.to_grid(fr.to_coeffs(f)) - f)) < 1e-14


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 100))
def test_shift_is_exact_on_trigonometric_polynomials(alpha, seed):
    n = 64
    th, f = _trig(n, seed)
    c = fr.to_coeffs(f)
    shifted = fr.to_grid(fr.shift(c, alpha))
    ref = fr.evaluate(c, th + alpha)
    assert np.max(np.abs(shifted - ref)) < 1e-12


def test_derivative():
    n = 32
    th = np.arange(n) / n
    c = fr.to_coeffs(np.sin(2 * np.pi * 3 * th))
    d = fr.to_grid(fr.derivative(c))
    assert np.max(np.abs(d - 6 * np.pi * np.cos(2 * np.pi * 3 * th))) < 1e-12


def test_cohomology_zero_average_residual():
    n = 128
    th, rhs = _trig(n, 3)
    rhs -= rhs.mean()
    phi, dmin = fr.cohomology_zero_avg(fr.to_coeffs(rhs), W2)
    res = fr.to_grid(fr.shift(phi, W2)) - fr.to_grid(phi) - rhs
    assert np.max(np.abs(res)) < 1e-13
    assert abs(fr.mean(fr.to_grid(phi))) < 1e-15
    assert 0 < dmin < 2


def test_cohomology_zero_average_requires_zero_mean():
    rhs = np.ones(16)
    with pytest.raises(ValueError):
        fr.cohomology_zero_avg(fr.to_coeffs(rhs), W2)


@pytest.mark.parametrize("lam", [0.5, 0.999, 1.3])
def test_cohomology_lambda_residual(lam):
    n = 128
    th, rhs = _trig(n, 4)
    phi, _ = fr.cohomology_lambda(fr.to_coeffs(rhs), W2, lam)
    res = fr.to_grid(fr.shift(phi, W2)) - lam * fr.to_grid(phi) - rhs
    assert np.max(np.abs(res)) < 1e-12


def test_cohomology_lambda_constant_mode():
    phi, _ = fr.cohomology_lambda(fr.to_coeffs(np.full(8, 2.0)), W2, 0.5)
    assert np.allclose(fr.to_grid(phi), 4.0)


def test_small_divisor_warning():
    with pytest.warns(fr.SmallDivisorWarning):
        fr.cohomology_zero_avg(fr.to_coeffs(np.sin(2 * np.pi * np.arange(8) / 8)), 1e-17)


def test_multiprecision_cohomology():
    with precision(200) as c:
        n = 32
        th = c.arange(n) / n
        rhs = cos(2 * c.pi * 3 * th)
        w = silver_frequency(c)
        phi, _ = fr.cohomology_zero_avg(fr.to_coeffs(rhs), w)
        res = fr.to_grid(fr.shift(phi, w)) - fr.to_grid(phi) - rhs
        assert max(abs(v) for v in res) < 1e-55


def test_resample_preserves_interpolant():
    n = 32
    th, f = _trig(n, 5, decay=0.3)
    c = fr.to_coeffs(f)
    up = fr.resample(c, 128)
    x = np.linspace(0, 1, 7)
    assert np.max(np.abs(fr.evaluate(up, x) - fr.evaluate(c, x))) < 1e-13
    down = fr.resample(up, n)
    assert np.max(np.abs(fr.to_grid(down) - f)) < 1e-13


def test_tail_norm():
    c = np.zeros(64, dtype=complex)
    c[1] = 1.0
    c[30] = 1e-9
    assert fr.tail_norm(c) == pytest.approx(1e-9)


def test_lifted_curve_operations():
    n = 16
    K = fr.LiftedCurve.rotation(n, 0.25)
    assert np.allclose(K.K1(), np.arange(n) / n) and np.allclose(K.K2(), 0.25)
    a1, a2 = K.derivative()
    assert np.allclose(a1, 1) and np.allclose(a2, 0)
    Ks = K.shifted(0.3)
    assert np.allclose(Ks.K1(), np.arange(n) / n + 0.3)
    assert np.allclose((Ks - K).p1, 0.3)


def test_from_coeffs_keeps_exact_coefficients():
    c1 = fr.to_coeffs(np.random.default_rng(1).standard_normal(8))
    K = fr.LiftedCurve.from_coeffs(c1, c1)
    assert K.coeffs()[0] is c1


def test_evaluate_at_mesh_points():
    th, f = _trig(16, 7)
    assert np.max(np.abs(fr.evaluate(fr.to_coeffs(f), th) - f)) < 1e-13
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert math.isfinite(float(fr.evaluate(fr.to_coeffs(f), [0.123])[0]))

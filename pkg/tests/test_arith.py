import math

import gmpy2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinorbit import arith
from spinorbit.arith import DomainError, Jet, ScalarContext, digits_for_bits, precision


def test_digits_for_bits():
    assert digits_for_bits(53) == 18
    assert digits_for_bits(160) == math.ceil(160 * math.log10(2)) + 2


def test_context_eps_and_dtype():
    c = ScalarContext(53)
    assert c.is_double and c.eps == 2.0**-52 and c.dtype == np.float64
    m = ScalarContext(128)
    assert not m.is_double and m.eps == 2.0**-127 and m.dtype == object


def test_context_rejects_tiny_precision():
    with pytest.raises(ValueError):
        ScalarContext(8)


@settings(max_examples=60, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_double_format_round_trip(x):
    c = ScalarContext(53)
    assert c.parse(c.format(x)) == x


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=-10**40, max_value=10**40), st.integers(1, 10**30))
def test_mp_format_round_trip(p, q):
    with precision(200) as c:
        x = c.scalar(p) / q
        assert c.parse(c.format(x)) == x
        mant = c.format(x).split("e")[0].lstrip("-").replace(".", "")
        assert len(mant) == c.digits


def test_precision_context_restores():
    before = arith.get_context()
    with precision(100) as c:
        assert arith.get_context().bits == 100
        assert isinstance(c.pi, gmpy2.mpfr)
    assert arith.get_context() == before


@pytest.mark.parametrize("n", [2, 8, 64])
def test_mp_fft_matches_numpy(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal(n)
    ref = np.fft.fft(x)
    with precision(120) as c:
        X = c.fft(c.array(x))
        got = np.array([complex(v) for v in X])
        assert np.max(np.abs(got - ref)) < 1e-12 * n
        back = c.ifft_unnormalized(X) / n
        err = max(abs(back[i].real - c.scalar(x[i])) for i in range(n))
        assert err < 1e-33


def test_elementary_functions_dispatch():
    with precision(100) as c:
        x = c.array([0.1, 0.2])
        s = arith.sin(x)
        assert s.dtype == object
        assert abs(float(s[0]) - math.sin(0.1)) < 1e-16
    assert isinstance(arith.sin(np.array([0.1]))[0], np.floating)


def test_domain_errors():
    with pytest.raises(DomainError):
        arith.sqrt(np.array([-1.0]))
    with pytest.raises(DomainError):
        arith.log(0.0)
    with pytest.raises(DomainError):
        arith.div(1.0, 0.0)


def test_jet_rules_against_finite_differences():
    def f(z):
        return arith.exp(arith.sin(z) * z) / (1 + z * z) + arith.sqrt(z) ** 3

    x0, h = 0.7, 1e-6
    j = f(Jet.variable(x0, 0, 1))
    fd = (f(x0 + h) - f(x0 - h)) / (2 * h)
    assert abs(j.val - f(x0)) == 0
    assert abs(j.d[0] - fd) < 1e-8


def test_jet_multivariate():
    a = Jet.variable(2.0, 0, 2)
    b = Jet.variable(3.0, 1, 2)
    r = a * b - a / b
    assert np.allclose(r.d, [3 - 1 / 3, 2 + 2 / 9])

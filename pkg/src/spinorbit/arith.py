"""Floating-point contexts and first-order jet arithmetic.

Two scalar backends live behind :class:`ScalarContext`:

* ``bits == 53``: hardware binary64, values are ``float`` / ``float64`` arrays;
* any other ``bits``: MPFR through :mod:`gmpy2`, values are ``gmpy2.mpfr``
  scalars or numpy ``object`` arrays of them.

The precision is global for a run.  :func:`set_precision` selects it and
:func:`precision` is a context manager for temporary changes (tests, the
jet goodness check).  Elementary functions dispatch on the value type, so
the same numerical code runs unchanged on both backends.

A :class:`Jet` is a truncated first-order polynomial ``val + sum d_i dx_i``.
Its ``val`` may be a scalar or an array; ``d`` has the partials stacked
along the first axis.
"""

from __future__ import annotations

import math
import os
import threading
from contextlib import contextmanager

import gmpy2
import numpy as np

__all__ = [
    "DomainError",
    "ScalarContext",
    "Jet",
    "get_context",
    "set_precision",
    "precision",
    "bits_for_digits",
    "digits_for_bits",
    "is_mp",
    "sin",
    "cos",
    "sincos",
    "exp",
    "log",
    "sqrt",
    "atan2",
    "rint",
    "add",
    "sub",
    "mul",
    "div",
    "to_float",
]

DOUBLE_BITS = 53


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its domain."""


def bits_for_digits(digits: int) -> int:
    """Mantissa bits needed to carry ``digits`` significant decimal digits."""
    return int(math.ceil(digits * math.log2(10)))


def digits_for_bits(bits: int) -> int:
    """Decimal digits printed to round-trip a ``bits``-bit mantissa."""
    return int(math.ceil(bits * math.log10(2))) + 2


_mp_sin = np.frompyfunc(gmpy2.sin, 1, 1)
_mp_cos = np.frompyfunc(gmpy2.cos, 1, 1)
_mp_exp = np.frompyfunc(gmpy2.exp, 1, 1)
_mp_log = np.frompyfunc(gmpy2.log, 1, 1)
_mp_sqrt = np.frompyfunc(gmpy2.sqrt, 1, 1)
_mp_atan2 = np.frompyfunc(gmpy2.atan2, 2, 1)
_mp_rint = np.frompyfunc(gmpy2.rint, 1, 1)
_mp_float = np.frompyfunc(float, 1, 1)


class ScalarContext:
    """Binary floating-point format with ``bits`` of mantissa.

    Parameters
    ----------
    bits : int
        Mantissa precision ``p``.  53 selects the hardware format.
    """

    def __init__(self, bits: int = DOUBLE_BITS):
        bits = int(bits)
        if bits < 24:
            raise ValueError(f"precision must be at least 24 bits, got {bits}")
        self.bits = bits

    def __repr__(self):
        return f"ScalarContext(bits={self.bits})"

    def __eq__(self, other):
        return isinstance(other, ScalarContext) and other.bits == self.bits

    def __hash__(self):
        return hash(self.bits)

    @property
    def is_double(self) -> bool:
        return self.bits == DOUBLE_BITS

    @property
    def eps(self) -> float:
        """Machine epsilon ``2**(1 - p)`` (as a Python float)."""
        return 2.0 ** (1 - self.bits)

    @property
    def digits(self) -> int:
        return digits_for_bits(self.bits)

    @property
    def dtype(self):
        return np.float64 if self.is_double else object

    def activate(self):
        """Install the MPFR precision for the calling thread."""
        if not self.is_double:
            gctx = gmpy2.get_context()
            gctx.precision = self.bits
            gctx.round = gmpy2.RoundToNearest

    # -- construction -----------------------------------------------------
    def scalar(self, value):
        """Round ``value`` (number or decimal string) into this format."""
        if self.is_double:
            if isinstance(value, gmpy2.mpfr):
                return float(value)
            return float(value)
        self.activate()
        if isinstance(value, (float, np.floating)):
            return gmpy2.mpfr(float(value))
        if isinstance(value, gmpy2.mpfr):
            return gmpy2.mpfr(value, self.bits)
        return gmpy2.mpfr(value)

    def array(self, values):
        """Array of ``values`` in this format (float64 or object of mpfr)."""
        if self.is_double:
            arr = np.asarray(values, dtype=object if _has_mp(values) else None)
            if arr.dtype == object:
                return _mp_float(arr).astype(np.float64)
            return arr.astype(np.float64)
        self.activate()
        arr = np.asarray(values, dtype=object)
        out = np.empty(arr.shape, dtype=object)
        flat_in = arr.reshape(-1)
        flat_out = out.reshape(-1)
        for i, v in enumerate(flat_in):
            flat_out[i] = self.scalar(v)
        return out

    def zeros(self, shape):
        if self.is_double:
            return np.zeros(shape)
        self.activate()
        out = np.empty(shape, dtype=object)
        out.fill(gmpy2.mpfr(0))
        return out

    def ones(self, shape):
        return self.zeros(shape) + 1

    def arange(self, n):
        return self.array(np.arange(n))

    @property
    def pi(self):
        if self.is_double:
            return math.pi
        self.activate()
        return gmpy2.const_pi()

    # -- conversion -------------------------------------------------------
    def format(self, x) -> str:
        """Decimal string with enough digits to round-trip ``x``."""
        if self.is_double:
            return f"{float(x):.{self.digits - 1}e}"
        self.activate()
        return _mp_sci(gmpy2.mpfr(x), self.digits)

    def parse(self, text: str):
        return self.scalar(text.strip())

    # -- FFT --------------------------------------------------------------
    def fft(self, x):
        """Unnormalised forward DFT, ``X_k = sum_j x_j exp(-2 pi i jk/n)``."""
        if self.is_double:
            return np.fft.fft(x)
        return _mp_fft(self, x, -1)

    def ifft_unnormalized(self, X):
        """Unnormalised inverse DFT, ``x_j = sum_k X_k exp(2 pi i jk/n)``."""
        if self.is_double:
            return np.fft.ifft(X) * len(X)
        return _mp_fft(self, X, +1)


def _mp_sci(x, digits: int) -> str:
    """``x`` in scientific notation with ``digits`` significant digits."""
    if not gmpy2.is_finite(x):
        return str(float(x))
    if x == 0:
        return ("-" if gmpy2.is_signed(x) else "") + "0." + "0" * (digits - 1) + "e+00"
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant[0] == "-":
        sign, mant = "-", mant[1:]
    e = exp - 1
    return f"{sign}{mant[0]}.{mant[1:]}e{'-' if e < 0 else '+'}{abs(e):02d}"


def _has_mp(values) -> bool:
    if isinstance(values, gmpy2.mpfr):
        return True
    if isinstance(values, np.ndarray):
        return values.dtype == object
    if isinstance(values, (list, tuple)):
        return any(_has_mp(v) for v in values)
    return False


_state = threading.local()
_default_bits = int(os.environ.get("SPINORBIT_PREC", DOUBLE_BITS))
_global_ctx = ScalarContext(_default_bits)


def get_context() -> ScalarContext:
    """The active precision context."""
    ctx = getattr(_state, "ctx", None)
    return ctx if ctx is not None else _global_ctx


def set_precision(bits: int) -> ScalarContext:
    """Select the run-wide precision and return its context."""
    global _global_ctx
    _global_ctx = ScalarContext(bits)
    _state.ctx = None
    _global_ctx.activate()
    return _global_ctx


@contextmanager
def precision(bits: int):
    """Temporarily switch precision in the current thread."""
    prev = getattr(_state, "ctx", None)
    prev_bits = gmpy2.get_context().precision
    ctx = ScalarContext(bits)
    _state.ctx = ctx
    ctx.activate()
    try:
        yield ctx
    finally:
        _state.ctx = prev
        gmpy2.get_context().precision = prev_bits


# ---------------------------------------------------------------------------
# multiprecision FFT (radix 2, vectorised over butterflies)

_twiddle_cache: dict = {}
_bitrev_cache: dict = {}


def _bitrev(n):
    perm = _bitrev_cache.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        perm = np.zeros(n, dtype=np.int64)
        for b in range(bits):
            perm |= ((idx >> b) & 1) << (bits - 1 - b)
        _bitrev_cache[n] = perm
    return perm


def _twiddles(ctx, m, sign):
    key = (ctx.bits, m, sign)
    w = _twiddle_cache.get(key)
    if w is None:
        ctx.activate()
        pi = gmpy2.const_pi()
        w = np.empty(m, dtype=object)
        for j in range(m):
            ang = sign * pi * j / m
            w[j] = gmpy2.mpc(gmpy2.cos(ang), gmpy2.sin(ang))
        _twiddle_cache[key] = w
    return w


def _mp_fft(ctx, x, sign):
    n = len(x)
    if n & (n - 1):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    ctx.activate()
    a = np.asarray(x, dtype=object)[_bitrev(n)]
    a = np.array([gmpy2.mpc(v) for v in a], dtype=object)
    m = 1
    while m < n:
        w = _twiddles(ctx, m, sign)
        a = a.reshape(-1, 2, m)
        even = a[:, 0, :]
        odd = a[:, 1, :] * w
        a = np.concatenate([even + odd, even - odd], axis=1).reshape(n)
        m *= 2
    return a


# ---------------------------------------------------------------------------
# elementary functions on scalars / arrays (either backend) and jets


def is_mp(x) -> bool:
    if isinstance(x, Jet):
        return is_mp(x.val)
    if isinstance(x, np.ndarray):
        return x.dtype == object
    return isinstance(x, (gmpy2.mpfr, gmpy2.mpc))


def _dispatch(x, f_np, f_mp, f_scalar_mp):
    if isinstance(x, np.ndarray):
        if x.dtype == object:
            return f_mp(x)
        return f_np(x)
    if isinstance(x, gmpy2.mpfr):
        return f_scalar_mp(x)
    return f_np(x)


def _check_positive(x, name, strict):
    bad = np.any(np.asarray(x <= 0) if strict else np.asarray(x < 0))
    if bad:
        raise DomainError(f"{name} of a {'non-positive' if strict else 'negative'} value")


def sin(x):
    if isinstance(x, Jet):
        s, c = _sincos_plain(x.val)
        return Jet(s, c * x.d)
    return _dispatch(x, np.sin, _mp_sin, gmpy2.sin)


def cos(x):
    if isinstance(x, Jet):
        s, c = _sincos_plain(x.val)
        return Jet(c, -s * x.d)
    return _dispatch(x, np.cos, _mp_cos, gmpy2.cos)


def _sincos_plain(x):
    return sin(x), cos(x)


def sincos(x):
    """Sine and cosine, sharing the argument reduction for jets."""
    if isinstance(x, Jet):
        s, c = _sincos_plain(x.val)
        return Jet(s, c * x.d), Jet(c, -s * x.d)
    return _sincos_plain(x)


def exp(x):
    if isinstance(x, Jet):
        v = exp(x.val)
        return Jet(v, v * x.d)
    return _dispatch(x, np.exp, _mp_exp, gmpy2.exp)


def log(x):
    if isinstance(x, Jet):
        return Jet(log(x.val), x.d / x.val)
    _check_positive(x, "log", strict=True)
    return _dispatch(x, np.log, _mp_log, gmpy2.log)


def sqrt(x):
    if isinstance(x, Jet):
        v = sqrt(x.val)
        if np.any(np.asarray(v == 0)):
            raise DomainError("derivative of sqrt at zero")
        return Jet(v, x.d / (2 * v))
    _check_positive(x, "sqrt", strict=False)
    return _dispatch(x, np.sqrt, _mp_sqrt, gmpy2.sqrt)


def atan2(y, x):
    if isinstance(y, np.ndarray) and y.dtype == object or isinstance(y, gmpy2.mpfr):
        if isinstance(y, np.ndarray) or isinstance(x, np.ndarray):
            return _mp_atan2(y, x)
        return gmpy2.atan2(y, x)
    return np.arctan2(y, x)


def rint(x):
    """Round to the nearest integer (ties to even), keeping the type."""
    return _dispatch(x, np.rint, _mp_rint, gmpy2.rint)


def to_float(x):
    """Convert a scalar or array of either backend to float64."""
    if isinstance(x, np.ndarray):
        if x.dtype == object:
            return _mp_float(x).astype(np.float64)
        return x.astype(np.float64)
    return float(x)


def add(a, b):
    return a + b


def sub(a, b):
    return a - b


def mul(a, b):
    return a * b


def div(a, b):
    """Quotient with an explicit domain check on the divisor."""
    bval = b.val if isinstance(b, Jet) else b
    if np.any(np.asarray(bval == 0)):
        raise DomainError("division by zero")
    return a / b


class Jet:
    """First-order truncated polynomial ``val + <d, dx>``.

    Parameters
    ----------
    val : scalar or ndarray
        Value part.
    d : sequence or ndarray
        Partials, one per independent direction, stacked along axis 0.
    """

    __slots__ = ("val", "d")
    __array_priority__ = 100

    def __init__(self, val, d):
        self.val = val
        self.d = d if isinstance(d, np.ndarray) else np.asarray(
            d, dtype=object if _has_mp(d) or is_mp(val) else None
        )

    @classmethod
    def variable(cls, val, index, nvars):
        """Independent variable ``index`` out of ``nvars`` directions."""
        d = [0] * nvars
        d[index] = 1
        if is_mp(val):
            d = np.array([gmpy2.mpfr(v) for v in d], dtype=object)
        else:
            d = np.array(d, dtype=float)
        return cls(val, d)

    @classmethod
    def constant(cls, val, nvars):
        d = np.array([gmpy2.mpfr(0)] * nvars, dtype=object) if is_mp(val) else np.zeros(nvars)
        return cls(val, d)

    @property
    def nvars(self):
        return self.d.shape[0]

    def __repr__(self):
        return f"Jet({self.val!r}; {list(self.d)!r})"

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets with different number of variables")
            return other
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return Jet(self.val + other, self.d)
        return Jet(self.val + o.val, self.d + o.d)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return Jet(self.val - other, self.d)
        return Jet(self.val - o.val, self.d - o.d)

    def __rsub__(self, other):
        return Jet(other - self.val, -self.d)

    def __neg__(self):
        return Jet(-self.val, -self.d)

    def __pos__(self):
        return self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return Jet(self.val * other, self.d * other)
        return Jet(self.val * o.val, self.val * o.d + self.d * o.val)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            if np.any(np.asarray(other == 0)):
                raise DomainError("division by zero")
            return Jet(self.val / other, self.d / other)
        if np.any(np.asarray(o.val == 0)):
            raise DomainError("division by zero")
        q = self.val / o.val
        return Jet(q, (self.d - q * o.d) / o.val)

    def __rtruediv__(self, other):
        if np.any(np.asarray(self.val == 0)):
            raise DomainError("division by zero")
        q = other / self.val
        return Jet(q, -q * self.d / self.val)

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        if isinstance(p, int) and p >= 0:
            if p == 0:
                return Jet(self.val * 0 + 1, self.d * 0)
            v = self.val ** (p - 1)
            return Jet(v * self.val, p * v * self.d)
        if np.any(np.asarray(self.val <= 0)):
            raise DomainError("non-integer power of a non-positive value")
        v = self.val ** p
        return Jet(v, p * (v / self.val) * self.d)

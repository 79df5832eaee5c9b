"""Periodic functions on an equispaced mesh and their Fourier coefficients.

Coefficients use the convention ``c_k = (1/n) sum_j f(j/n) exp(-2 pi i k j/n)``
so that a constant ``c`` has ``c_0 = c`` and ``cos(2 pi theta)`` has
``c_1 = c_{-1} = 1/2``.  Coefficient arrays are stored in FFT order
(``k = 0, 1, ..., n/2 - 1, -n/2, ..., -1``).

Diagonal operators (shift, derivative, cohomological equations) act on
the coefficients with a multiplier ``m(k)``.  The Nyquist mode ``-n/2``
stands for a real cosine, so it receives ``(m(n/2) + m(-n/2))/2``, which
keeps real data real.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .arith import cos, get_context, sin, to_float

__all__ = [
    "SmallDivisorWarning",
    "check_size",
    "frequencies",
    "to_coeffs",
    "to_grid",
    "shift",
    "derivative",
    "cohomology_zero_avg",
    "cohomology_lambda",
    "tail_norm",
    "evaluate",
    "resample",
    "LiftedCurve",
    "mean",
]


class SmallDivisorWarning(RuntimeWarning):
    """A divisor of a cohomological equation fell below the warning level."""


def check_size(n: int) -> int:
    n = int(n)
    if n < 2 or n & (n - 1):
        raise ValueError(f"mesh size must be a power of two, got {n}")
    return n


def frequencies(n: int) -> np.ndarray:
    """Signed integer frequencies in FFT order."""
    return np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)


def _real(z):
    if isinstance(z, np.ndarray):
        if z.dtype == object:
            return np.frompyfunc(lambda v: v.real, 1, 1)(z)
        return np.real(z)
    return z.real


def _abs(z):
    if isinstance(z, np.ndarray) and z.dtype == object:
        return np.frompyfunc(abs, 1, 1)(z)
    return np.abs(z)


def to_coeffs(grid):
    """Fourier coefficients of a real grid of size ``n`` (power of two)."""
    ctx = get_context()
    n = check_size(len(grid))
    return ctx.fft(np.asarray(grid)) / n


def to_grid(coeffs):
    """Real grid values from Hermitian-symmetric coefficients."""
    ctx = get_context()
    check_size(len(coeffs))
    return _real(ctx.ifft_unnormalized(np.asarray(coeffs)))


def mean(grid):
    """Average of a periodic grid function."""
    return np.sum(grid) / len(grid)


_mult_cache: dict = {}


def _phases(n, omega):
    """``exp(2 pi i k omega)`` in FFT order, as a complex array."""
    ctx = get_context()
    key = (ctx.bits, n, str(omega))
    ph = _mult_cache.get(key)
    if ph is not None:
        return ph
    k = frequencies(n)
    if ctx.is_double:
        ang = 2 * np.pi * np.mod(k * float(omega), 1.0)
        ph = np.exp(1j * ang)
    else:
        ctx.activate()
        w = ctx.scalar(omega)
        twopi = 2 * ctx.pi
        ph = np.empty(n, dtype=object)
        for i, ki in enumerate(k):
            a = int(ki) * w
            a = twopi * (a - gmpy2.floor(a))
            ph[i] = gmpy2.mpc(cos(a), sin(a))
    if len(_mult_cache) > 64:
        _mult_cache.clear()
    _mult_cache[key] = ph
    return ph


def _apply(coeffs, mult, nyq):
    """Multiply by ``mult`` with ``nyq`` used on the Nyquist mode."""
    out = coeffs * mult
    n = len(coeffs)
    out[n // 2] = coeffs[n // 2] * nyq
    return out


def shift(coeffs, omega):
    """Coefficients of ``f(theta + omega)``."""
    n = len(coeffs)
    ph = _phases(n, omega)
    return _apply(coeffs, ph, _real(ph[n // 2]))


def derivative(coeffs):
    """Coefficients of ``d f/d theta``."""
    ctx = get_context()
    n = len(coeffs)
    k = frequencies(n)
    if ctx.is_double:
        mult = 2j * np.pi * k
    else:
        twopi = 2 * ctx.pi
        mult = np.array([gmpy2.mpc(0, twopi * int(ki)) for ki in k], dtype=object)
    return _apply(coeffs, mult, 0)


def _divisors(n, omega, lam):
    ph = _phases(n, omega)
    return ph - lam


def _warn_small(div, level, what):
    a = to_float(_abs(div))
    dmin = float(np.min(a)) if len(a) else np.inf
    if dmin < level:
        warnings.warn(f"{what}: smallest divisor {dmin:.3e} below {level:.3e}",
                      SmallDivisorWarning, stacklevel=3)
    return dmin


def cohomology_zero_avg(rhs_coeffs, omega, check_mean=True):
    """Zero-mean solution of ``phi(theta + omega) - phi(theta) = rhs``.

    Returns ``(phi_coeffs, min_divisor)``.
    """
    ctx = get_context()
    n = len(rhs_coeffs)
    scale = float(np.max(to_float(_abs(rhs_coeffs)))) if n else 0.0
    m0 = abs(complex(rhs_coeffs[0]))
    if check_mean and m0 > 100 * ctx.eps * max(scale, 1e-300) * n and m0 > 0:
        raise ValueError(f"right-hand side has mean {m0:.3e}; zero mean required")
    div = _divisors(n, omega, 1)
    dmin = _warn_small(div[1:], 10 * ctx.eps, "cohomology_zero_avg")
    out = rhs_coeffs.copy()
    out[0] = out[0] * 0
    nz = np.arange(1, n)
    out[nz] = rhs_coeffs[nz] / div[nz]
    h = n // 2
    out[h] = rhs_coeffs[h] * _real(1 / div[h])
    return out, dmin


def cohomology_lambda(rhs_coeffs, omega, lam):
    """Solution of ``phi(theta + omega) - lam phi(theta) = rhs``.

    Returns ``(phi_coeffs, min_divisor)``.
    """
    ctx = get_context()
    n = len(rhs_coeffs)
    if lam == 1:
        if abs(complex(rhs_coeffs[0])) > 0:
            raise ValueError("lam = 1 requires a zero-mean right-hand side")
        return cohomology_zero_avg(rhs_coeffs, omega)
    div = _divisors(n, omega, lam)
    dmin = _warn_small(div, 10 * ctx.eps, "cohomology_lambda")
    out = rhs_coeffs / div
    h = n // 2
    out[h] = rhs_coeffs[h] * _real(1 / div[h])
    return out, dmin


def tail_norm(coeffs, fraction=0.25):
    """Largest ``|c_k|`` over the top ``fraction`` of retained ``|k|``."""
    n = len(coeffs)
    k = np.abs(frequencies(n))
    sel = k >= (1 - fraction) * (n // 2)
    return float(np.max(to_float(_abs(coeffs[sel]))))


def evaluate(coeffs, theta):
    """Trigonometric interpolant at arbitrary points ``theta``."""
    ctx = get_context()
    n = len(coeffs)
    k = frequencies(n)
    theta = np.atleast_1d(theta)
    twopi = 2 * ctx.pi
    out = []
    for th in theta:
        acc = _real(coeffs[0]) * 1
        for i in range(1, n // 2):
            a = twopi * int(k[i]) * th
            c, s = cos(a), sin(a)
            z = coeffs[i]
            acc = acc + 2 * (_real(z) * c - z.imag * s)
        a = twopi * (n // 2) * th
        acc = acc + _real(coeffs[n // 2]) * cos(a)
        out.append(acc)
    return ctx.array(out)


def resample(coeffs, n_new):
    """Zero-pad or truncate coefficients to mesh size ``n_new``."""
    n = len(coeffs)
    check_size(n_new)
    out = np.zeros(n_new, dtype=coeffs.dtype)
    if coeffs.dtype == object:
        out.fill(gmpy2.mpc(0))
    m = min(n, n_new) // 2
    out[:m] = coeffs[:m]
    out[n_new - m + 1 :] = coeffs[n - m + 1 :]
    if n_new > n:
        # split the old Nyquist cosine between +-n/2
        out[m] = coeffs[m] / 2
        out[n_new - m] = coeffs[m] / 2
    elif n_new < n:
        out[m] = (coeffs[m] + coeffs[n - m]).real
    else:
        out[m] = coeffs[m]
    return out


@dataclass
class LiftedCurve:
    """Embedding ``K(theta) = (theta + p1(theta), p2(theta))``.

    ``p1`` and ``p2`` are value grids on ``theta_k = k/n``; coefficients
    are computed on demand.
    """

    p1: np.ndarray
    p2: np.ndarray
    # coefficients the grids were built from, kept so that files round-trip
    exact_coeffs: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        check_size(len(self.p1))
        if len(self.p2) != len(self.p1):
            raise ValueError("components must share the mesh")

    @property
    def n(self) -> int:
        return len(self.p1)

    @classmethod
    def from_coeffs(cls, c1, c2):
        return cls(to_grid(c1), to_grid(c2), (c1, c2))

    @classmethod
    def rotation(cls, n, y0):
        """The flat curve ``(theta, y0)``."""
        ctx = get_context()
        z = ctx.zeros(n)
        return cls(z, z + ctx.scalar(y0))

    def coeffs(self):
        if self.exact_coeffs is not None:
            return self.exact_coeffs
        return to_coeffs(self.p1), to_coeffs(self.p2)

    def theta(self):
        ctx = get_context()
        return ctx.arange(self.n) / self.n

    def K1(self):
        return self.theta() + self.p1

    def K2(self):
        return self.p2

    def shifted(self, omega):
        """``K(theta + omega)``, still written as a lifted curve."""
        c1, c2 = self.coeffs()
        return LiftedCurve(to_grid(shift(c1, omega)) + omega, to_grid(shift(c2, omega)))

    def derivative(self):
        """Grids of ``dK1/d theta`` (mean 1) and ``dK2/d theta``."""
        c1, c2 = self.coeffs()
        return to_grid(derivative(c1)) + 1, to_grid(derivative(c2))

    def resampled(self, n_new):
        c1, c2 = self.coeffs()
        return LiftedCurve.from_coeffs(resample(c1, n_new), resample(c2, n_new))

    def converted(self, ctx=None):
        ctx = ctx or get_context()
        return LiftedCurve(ctx.array(self.p1), ctx.array(self.p2))

    def __add__(self, other):
        return LiftedCurve(self.p1 + other.p1, self.p2 + other.p2)

    def __sub__(self, other):
        return LiftedCurve(self.p1 - other.p1, self.p2 - other.p2)

"""Closed-form formulas of the dissipative spin-orbit problem.

The satellite moves on a Keplerian ellipse with semimajor axis ``a = 1``
and mean motion ``n = 1``, so one orbital period is ``2 pi``.  The spin
angle is ``x`` (or ``beta`` when the eccentric anomaly ``u`` is the
independent variable) and ``y`` is its time derivative.

Every function accepts plain floats, ``gmpy2.mpfr`` scalars and
:class:`~spinorbit.arith.Jet` values (for the state and for ``e``), so
the same code yields values and first-order partial derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import arith
from .arith import Jet, cos, exp, get_context, sin, sqrt

__all__ = [
    "ModelParams",
    "KeplerState",
    "kepler_solve",
    "kepler_state",
    "true_anomaly_terms",
    "sc_functions",
    "field_full_u",
    "field_averaged_t",
    "nbar_lbar",
    "a5_integral",
    "conformal_factor",
    "hamiltonian",
    "golden_frequency",
    "silver_frequency",
    "parse_frequency",
]


@dataclass(frozen=True)
class ModelParams:
    """Parameters of one spin-orbit problem.

    Attributes
    ----------
    eps : scalar
        Equatorial ellipticity, ``eps >= 0``.
    eta : scalar
        Dissipative constant, ``eta >= 0``.
    ecc : scalar or Jet
        Orbital eccentricity, ``0 <= ecc < 1``.
    omega : scalar, optional
        Target frequency of the invariant attractor.
    """

    eps: object = 0.0
    eta: object = 0.0
    ecc: object = 0.0
    omega: object = None

    def __post_init__(self):
        e = self.ecc.val if isinstance(self.ecc, Jet) else self.ecc
        if not 0 <= e < 1:
            raise ValueError(f"eccentricity must lie in [0, 1), got {e}")
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if self.eta < 0:
            raise ValueError(f"eta must be non-negative, got {self.eta}")

    def with_ecc(self, ecc) -> "ModelParams":
        return replace(self, ecc=ecc)

    def converted(self, ctx=None) -> "ModelParams":
        """Copy with every numeric field rounded into ``ctx``."""
        ctx = ctx or get_context()
        om = None if self.omega is None else ctx.scalar(self.omega)
        return ModelParams(ctx.scalar(self.eps), ctx.scalar(self.eta), ctx.scalar(self.ecc), om)


@dataclass(frozen=True)
class KeplerState:
    """Position on the Kepler ellipse at one instant."""

    u: object
    t: object
    cosf: object
    sinf: object
    r_over_a: object


def _val(x):
    return x.val if isinstance(x, Jet) else x


def kepler_solve(t, e, max_iter: int = 50):
    """Eccentric anomaly ``u`` solving ``t = u - e sin u``.

    Safeguarded Newton iteration from ``u = t + e sin t`` inside the
    bracket ``[t - e, t + e]``; falls back to bisection if Newton has
    not converged after ``max_iter`` iterations.  Works for scalars of
    either backend and for arrays (elementwise).  When ``e`` is a jet the
    result carries ``du/de = sin u / (1 - e cos u)``.
    """
    if isinstance(e, Jet):
        u = kepler_solve(t, e.val, max_iter)
        return Jet(u, (sin(u) / (1 - e.val * cos(u))) * e.d)
    if isinstance(t, np.ndarray):
        out = np.empty(t.shape, dtype=t.dtype)
        for idx, ti in np.ndenumerate(t):
            out[idx] = kepler_solve(ti, e, max_iter)
        return out
    if e < 0 or e >= 1:
        raise arith.DomainError(f"eccentricity {e} outside [0, 1)")
    ctx = get_context()
    if e == 0:
        return t
    tol = ctx.eps
    lo, hi = t - e, t + e
    u = t + e * sin(t)
    for _ in range(max_iter):
        f = u - e * sin(u) - t
        if f == 0:
            return u
        if f > 0:
            hi = u
        else:
            lo = u
        du = f / (1 - e * cos(u))
        un = u - du
        if not lo <= un <= hi:
            un = (lo + hi) / 2
        if abs(un - u) <= tol * (1 + abs(u)):
            return un
        u = un
    while hi - lo > 2 * tol * (1 + abs(lo)):
        mid = (lo + hi) / 2
        if mid - e * sin(mid) - t > 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


def true_anomaly_terms(u, e):
    """``(cos f, sin f, r/a)`` at eccentric anomaly ``u``."""
    cu, su = cos(u), sin(u)
    r = 1 - e * cu
    cosf = (cu - e) / r
    sinf = sqrt(1 - e * e) * su / r
    return cosf, sinf, r


def kepler_state(u, e) -> KeplerState:
    """Full :class:`KeplerState` at eccentric anomaly ``u``."""
    cosf, sinf, r = true_anomaly_terms(u, e)
    return KeplerState(u=u, t=u - e * sin(u), cosf=cosf, sinf=sinf, r_over_a=r)


def sc_functions(x, u, e):
    """``s = sin(2x - 2f)`` and ``c = cos(2x - 2f)`` written through ``u``.

    Their derivatives satisfy ``ds/dx = 2c`` and ``dc/dx = -2s``.
    """
    cosf, sinf, _ = true_anomaly_terms(u, e)
    c2f = 2 * cosf * cosf - 1
    s2f = 2 * cosf * sinf
    s2x, c2x = sin(2 * x), cos(2 * x)
    s = s2x * c2f - c2x * s2f
    c = c2x * c2f + s2x * s2f
    return s, c


def field_full_u(u, beta, gamma, params: ModelParams):
    """Vector field of the full dissipative model in the eccentric anomaly.

    Returns ``(d beta/du, d gamma/du)`` with ``gamma = d beta/du``.
    """
    e = params.ecc
    cu, su = cos(u), sin(u)
    R = 1 / (1 - e * cu)
    s, _ = sc_functions(beta, u, e)
    R2 = R * R
    R5 = R2 * R2 * R
    dgamma = (
        gamma * R * e * su
        - params.eps * R * s
        - params.eta * R5 * (gamma - R * sqrt(1 - e * e))
    )
    return gamma, dgamma


def nbar_lbar(e):
    """Coefficients ``(Nbar, Lbar)`` of the orbit-averaged tidal torque."""
    e2 = e * e
    w = 1 - e2
    w3 = w * w * w
    sq = sqrt(w)
    lbar = (1 + 3 * e2 + e2 * e2 * 3 / 8) / (w3 * w * sq)
    nbar = (1 + e2 * 15 / 2 + e2 * e2 * 45 / 8 + e2 * e2 * e2 * 5 / 16) / (w3 * w3)
    return nbar, lbar


def field_averaged_t(t, x, y, params: ModelParams):
    """Vector field of the averaged dissipative model in time.

    ``dy/dt = -eps (a/r)^3 sin(2x - 2f(t)) - eta (Lbar y - Nbar)`` with
    ``f(0) = u(0) = 0``.
    """
    e = params.ecc
    u = kepler_solve(t, e)
    cosf, sinf, r = true_anomaly_terms(u, e)
    R = 1 / r
    s2x, c2x = sin(2 * x), cos(2 * x)
    s = s2x * (2 * cosf * cosf - 1) - c2x * (2 * cosf * sinf)
    nbar, lbar = nbar_lbar(e)
    return y, -params.eps * R * R * R * s - params.eta * (lbar * y - nbar)


def a5_integral(e):
    """``int_0^{2 pi} (1 - e cos u)^{-5} du`` in closed form."""
    ctx = get_context()
    e2 = e * e
    w = 1 - e2
    return ctx.pi * (3 * e2 * e2 + 24 * e2 + 8) / (4 * w * w * w * w * sqrt(w))


def conformal_factor(e, eta):
    """Conformal factor ``lambda`` of the 2 pi return map."""
    return exp(-eta * a5_integral(e))


def hamiltonian(y, x, t, params: ModelParams):
    """Time-dependent Hamiltonian of the conservative model (diagnostic)."""
    e = params.ecc
    u = kepler_solve(t, e)
    cosf, sinf, r = true_anomaly_terms(u, e)
    R = 1 / r
    c = cos(2 * x) * (2 * cosf * cosf - 1) + sin(2 * x) * (2 * cosf * sinf)
    return y * y / 2 - params.eps / 2 * R * R * R * c


def golden_frequency(ctx=None):
    """``(sqrt 5 + 1)/2`` in the active precision."""
    ctx = ctx or get_context()
    return (sqrt(ctx.scalar(5)) + 1) / 2


def silver_frequency(ctx=None):
    """``1 + 1/(2 + (sqrt 5 - 1)/2)`` in the active precision."""
    ctx = ctx or get_context()
    return 1 + 1 / (2 + (sqrt(ctx.scalar(5)) - 1) / 2)


def parse_frequency(text, ctx=None):
    """Frequency from ``golden``, ``silver`` or a decimal string."""
    ctx = ctx or get_context()
    key = str(text).strip().lower()
    if key == "golden":
        return golden_frequency(ctx)
    if key == "silver":
        return silver_frequency(ctx)
    return ctx.parse(key)

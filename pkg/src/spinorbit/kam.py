"""Newton method for invariant attractors of conformally symplectic maps.

An invariant attractor with frequency ``omega`` is a pair ``(K, e)``
with ``P_e(K(theta)) = K(theta + omega)``, where ``K`` is a lifted curve
``(theta + p1, p2)`` and ``e`` is the drift parameter (the eccentricity).
Each Newton step uses the geometry of conformally symplectic maps to
reduce the linearised equation to two constant-coefficient cohomological
equations plus a 2x2 linear system for the averages.

All per-point quantities are formed on the mesh ``theta_k = k/n``;
shifts and cohomological equations are solved on Fourier coefficients.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import fourier as fr
from .arith import get_context, rint, to_float
from .flow import ReturnMap
from .fourier import LiftedCurve
from .model import ModelParams

__all__ = [
    "DegeneracyError",
    "NewtonDivergence",
    "NewtonDiagnostics",
    "TorusSolution",
    "default_tolerance",
    "invariance_error",
    "newton_step",
    "newton_solve",
    "accuracy_check",
    "normalize_shift",
]

log = logging.getLogger(__name__)


class DegeneracyError(ArithmeticError):
    """The 2x2 averaged system of a Newton step is numerically singular."""


class NewtonDivergence(RuntimeError):
    """Newton iteration did not reach the tolerance.

    ``best`` is ``(K, ecc, E_sup)`` of the iterate with the smallest
    invariance error and ``first_error`` the error of the initial guess.
    """

    def __init__(self, msg, history, best=None, first_error=None):
        super().__init__(msg)
        self.history = history
        self.best = best
        self.first_error = first_error


@dataclass
class NewtonDiagnostics:
    """Quantities recorded by one Newton step."""

    E_sup: float
    sigma: float
    W_sup: float
    cond_2x2: float
    small_divisor_min: float
    detM_err: float = 0.0
    residual_2x2: float = 0.0


@dataclass
class TorusSolution:
    """Invariant attractor together with its error estimates."""

    K: LiftedCurve
    ecc: object
    omega: object
    lam: object
    err_grid: float
    err_interlaced: float
    n: int
    params: ModelParams
    converged: bool = True
    iterations: int = 0
    history: list = field(default_factory=list)
    model: str = "full"
    tol: float = 0.0
    seconds: float = 0.0


def default_tolerance(bits: int) -> float:
    """Newton tolerance: ``1e-11`` in double, ``1e-35`` from 160 bits on,
    log-linear in between."""
    if bits <= 53:
        return 1e-11
    if bits >= 160:
        return 1e-35
    return 10.0 ** (-11 - 24 * (bits - 53) / 107)


def _sup(*arrays) -> float:
    return max(float(np.max(np.abs(to_float(a)))) for a in arrays)


def invariance_error(K: LiftedCurve, ecc, rmap: ReturnMap, omega, jets=False):
    """Invariance error ``E = P_e(K) - K(. + omega)`` on the mesh.

    Returns ``(E1, E2, E_sup, image)`` where ``image`` is the
    :class:`~spinorbit.flow.MapResult` of the mesh points.  The first
    component is reduced to ``[-1/2, 1/2]``.
    """
    img = rmap(K.K1(), K.K2(), ecc, jets=jets)
    Ks = K.shifted(omega)
    E1 = img.x - Ks.K1()
    E1 = E1 - rint(E1)
    E2 = img.y - Ks.K2()
    return E1, E2, _sup(E1, E2), img


def _solve2(A, b):
    """Gaussian elimination with partial pivoting for a 2x2 system."""
    (a11, a12), (a21, a22) = A
    b1, b2 = b
    if abs(a21) > abs(a11):
        a11, a12, b1, a21, a22, b2 = a21, a22, b2, a11, a12, b1
    if a11 == 0:
        raise DegeneracyError("singular 2x2 system")
    m = a21 / a11
    u22 = a22 - m * a12
    c2 = b2 - m * b1
    if u22 == 0:
        raise DegeneracyError("singular 2x2 system")
    x2 = c2 / u22
    x1 = (b1 - a12 * x2) / a11
    return x1, x2


def newton_step(K: LiftedCurve, ecc, rmap: ReturnMap, omega, evaluated=None):
    """One Newton step for the invariance equation.

    Parameters
    ----------
    K, ecc : current approximation.
    rmap : ReturnMap
        Return map with derivatives (full or averaged model).
    omega : frequency.
    evaluated : tuple, optional
        Output of ``invariance_error(..., jets=True)`` for ``(K, ecc)``.

    Returns
    -------
    K_new, ecc_new, NewtonDiagnostics
    """
    ctx = get_context()
    if evaluated is None:
        evaluated = invariance_error(K, ecc, rmap, omega, jets=True)
    E1, E2, E_sup, img = evaluated
    lam = rmap.lam(ecc)

    # alpha = DK, N = 1/(alpha^t alpha); M = [alpha | J^{-1} alpha N]
    a1, a2 = K.derivative()
    Nn = 1 / (a1 * a1 + a2 * a2)
    c1, c2 = fr.to_coeffs(a1), fr.to_coeffs(a2)
    a1s = fr.to_grid(fr.shift(c1, omega))
    a2s = fr.to_grid(fr.shift(c2, omega))
    Ns = 1 / (a1s * a1s + a2s * a2s)
    detM = a1 * a1 * Nn + a2 * a2 * Nn
    detM_err = _sup(detM - 1)
    if detM_err > 1e3 * ctx.eps:
        raise ArithmeticError(f"det M deviates from 1 by {detM_err:.3e}")

    # (M o T_omega)^{-1} = [[a1 N, a2 N], [-a2, a1]] at theta + omega
    def minv_shift(v1, v2):
        return (a1s * Ns * v1 + a2s * Ns * v2, -a2s * v1 + a1s * v2)

    Et1, Et2 = minv_shift(E1, E2)
    D = img.D
    De = img.De
    P1, P2 = a1 * Nn, a2 * Nn
    P1s, P2s = a1s * Ns, a2s * Ns
    # J^{-1} P = (-P2, P1)
    w1 = D[0, 0] * (-P2) + D[0, 1] * P1
    w2 = D[1, 0] * (-P2) + D[1, 1] * P1
    S = P1s * w1 + P2s * w2
    At1, At2 = minv_shift(De[0], De[1])

    mean = fr.mean
    Et1m, Et2m = mean(Et1), mean(Et2)
    At1m, At2m = mean(At1), mean(At2)
    Sm = mean(S)
    Ba, d1 = fr.cohomology_lambda(fr.to_coeffs(Et2 - Et2m), omega, lam)
    Bb, d2 = fr.cohomology_lambda(fr.to_coeffs(At2 - At2m), omega, lam)
    Ba = fr.to_grid(Ba)
    Bb = fr.to_grid(Bb)
    A = ((Sm, mean(S * Bb) + At1m), (lam - 1, At2m))
    b = (-Et1m - mean(S * Ba), -Et2m)
    W2m, sigma = _solve2(A, b)
    Af = np.array([[float(A[0][0]), float(A[0][1])], [float(A[1][0]), float(A[1][1])]])
    cond = float(np.linalg.cond(Af))
    if not math.isfinite(cond) or cond * ctx.eps > 1e-3:
        raise DegeneracyError(f"2x2 system condition number {cond:.3e}")
    r1 = A[0][0] * W2m + A[0][1] * sigma - b[0]
    r2 = A[1][0] * W2m + A[1][1] * sigma - b[1]
    resid = max(abs(float(r1)), abs(float(r2)))

    W2 = Ba + sigma * Bb + W2m
    rhs = S * W2 + Et1 + sigma * At1
    rhs = rhs - mean(rhs)
    W1, d3 = fr.cohomology_zero_avg(fr.to_coeffs(rhs), omega, check_mean=False)
    W1 = fr.to_grid(W1)

    dK1 = a1 * W1 - a2 * Nn * W2
    dK2 = a2 * W1 + a1 * Nn * W2
    K_new = LiftedCurve(K.p1 + dK1, K.p2 + dK2)
    diag = NewtonDiagnostics(
        E_sup=E_sup,
        sigma=abs(float(sigma)),
        W_sup=_sup(dK1, dK2),
        cond_2x2=cond,
        small_divisor_min=min(d1, d2, d3),
        detM_err=detM_err,
        residual_2x2=resid,
    )
    return K_new, ecc + sigma, diag


def accuracy_check(K: LiftedCurve, ecc, rmap: ReturnMap, omega, tol):
    """Invariance error on the interlaced mesh ``(k + 1/2)/n``.

    Returns ``(err_interlaced, passed)``; passes when the error is below
    ``10 * tol``.
    """
    Kh = K.shifted(get_context().scalar(1) / (2 * K.n))
    _, _, err, _ = invariance_error(Kh, ecc, rmap, omega)
    return err, err < 10 * tol


def normalize_shift(K: LiftedCurve):
    """Reparametrise ``K`` so that ``K1(0) = 0``.

    Solves ``alpha + p1(alpha) = 0`` by Newton's method on the Fourier
    interpolant and returns ``(K o T_alpha, alpha)``.
    """
    ctx = get_context()
    c1, _ = K.coeffs()
    d1 = fr.derivative(c1)
    alpha = -fr.evaluate(c1, [ctx.scalar(0)])[0]
    for _ in range(60):
        g = alpha + fr.evaluate(c1, [alpha])[0]
        dg = 1 + fr.evaluate(d1, [alpha])[0]
        step = g / dg
        alpha = alpha - step
        if abs(step) <= 4 * ctx.eps * (1 + abs(alpha)):
            break
    return K.shifted(alpha), alpha


def newton_solve(K0: LiftedCurve, ecc0, rmap: ReturnMap, omega, tol=None, max_iter=20,
                 check_accuracy=True, normalize=True, callback=None):
    """Iterate Newton steps until the invariance error is below ``tol``.

    Stops when ``E_sup < tol`` or when the last correction
    ``max(|MW|, |sigma|)`` is below ``tol``.  Aborts with
    :class:`NewtonDivergence` when ``E_sup`` grows twice in a row or
    ``max_iter`` is exceeded.

    Returns
    -------
    TorusSolution
    """
    ctx = get_context()
    t0 = time.perf_counter()
    tol = default_tolerance(ctx.bits) if tol is None else tol
    K, ecc = K0, ctx.scalar(ecc0)
    history = []
    grows = 0
    last = None
    best = None
    first = None
    converged = False
    it = 0
    err = None

    def fail(msg):
        return NewtonDivergence(msg, history, best, first)

    while True:
        ev = invariance_error(K, ecc, rmap, omega, jets=True)
        err = ev[2]
        if not math.isfinite(err):
            raise fail("non-finite invariance error")
        if history:
            history[-1]["E_next"] = err
        if first is None:
            first = err
        if best is None or err < best[2]:
            best = (K, ecc, err)
        if err < tol:
            converged = True
            break
        if last is not None and err > last:
            grows += 1
            if grows >= 2:
                raise fail(f"invariance error grew twice (E={err:.3e})")
        else:
            grows = 0
        if it >= max_iter:
            raise fail(f"no convergence in {max_iter} iterations (E={err:.3e})")
        last = err
        K, ecc, diag = newton_step(K, ecc, rmap, omega, evaluated=ev)
        it += 1
        history.append({"E": diag.E_sup, "sigma": diag.sigma, "W": diag.W_sup,
                        "cond": diag.cond_2x2, "divisor": diag.small_divisor_min})
        log.info("newton %d: E=%.3e sigma=%.3e W=%.3e", it, diag.E_sup, diag.sigma, diag.W_sup)
        if callback is not None:
            callback(it, diag)
        if not 0 <= float(ecc) < 1:
            raise fail(f"eccentricity left [0, 1): {float(ecc)}")
        if max(diag.W_sup, diag.sigma) < tol:
            _, _, err, _ = invariance_error(K, ecc, rmap, omega)
            history[-1]["E_next"] = err
            converged = True
            break
    if normalize:
        K, _ = normalize_shift(K)
        _, _, err, _ = invariance_error(K, ecc, rmap, omega)
    err_int = float("nan")
    if check_accuracy:
        err_int, _ = accuracy_check(K, ecc, rmap, omega, tol)
    return TorusSolution(
        K=K, ecc=ecc, omega=omega, lam=rmap.lam(ecc), err_grid=err, err_interlaced=err_int,
        n=K.n, params=rmap.params.with_ecc(ecc), converged=converged, iterations=it,
        history=history, model=rmap.name, tol=tol, seconds=time.perf_counter() - t0,
    )

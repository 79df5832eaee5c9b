"""Taylor-series integration of the spin-orbit flow with jet transport.

Both models share the second-order form

    x' = y,
    y' = y A(tau) - (sin 2x U1(tau) - cos 2x U2(tau)) + D(tau),

where the forcing series ``A, U1, U2, D`` depend only on the
independent variable ``tau`` and on the eccentricity ``e``:

* full model, ``tau = u`` (eccentric anomaly): ``A = e sin u R - eta R^5``,
  ``U1 = eps (p^2 - q^2) R^3``, ``U2 = 2 eps p q R^3``,
  ``D = eta sqrt(1-e^2) R^6``;
* averaged model, ``tau = t`` (time): ``A = -eta Lbar``,
  ``U1 = eps (p^2 - q^2) R^5``, ``U2 = 2 eps p q R^5``, ``D = eta Nbar``;

with ``R = a/r = 1/(1 - e cos u)``, ``p = cos u - e`` and
``q = sqrt(1-e^2) sin u`` (so ``cos f = pR``, ``sin f = qR``).

The forcing series are computed once per step and shared by every
trajectory of a batch.  The state series are computed by the usual
automatic-differentiation recurrences, vectorised over the batch and over
the jet components ``[value, d/d beta0, d/d gamma0, d/d e]``.

Batches are split into fixed-size chunks that share one step sequence,
so results do not depend on how chunks are spread over workers.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from math import factorial

import numpy as np

from . import arith
from .arith import Jet, cos, get_context, sin, sqrt, to_float
from .model import ModelParams, conformal_factor, field_full_u, kepler_solve, nbar_lbar

__all__ = [
    "IntegrationError",
    "TaylorPolicy",
    "FlowState",
    "FullForcing",
    "AveragedForcing",
    "taylor_coefficients",
    "taylor_step",
    "flow_u",
    "flow_batch",
    "MapResult",
    "map_G",
    "map_P",
    "variational_convert",
    "ReturnMap",
    "FullReturnMap",
    "AveragedReturnMap",
    "jet_goodness_test",
    "GoodnessResult",
    "default_policy",
    "CHUNK",
]

CHUNK = 256
NV = 3  # jet directions: beta0, gamma0, e


class IntegrationError(RuntimeError):
    """Raised when the step-size control cannot meet the tolerance."""


@dataclass(frozen=True)
class TaylorPolicy:
    """Order and step-size control of the Taylor integrator.

    Attributes
    ----------
    order : int or None
        Series order ``N``.  ``None`` picks ``ceil(-ln(tol)/2)`` clamped
        to ``[8, 40]``, with ``tol = min(abs_tol, rel_tol)``.
    abs_tol, rel_tol : float
        Local truncation tolerances.
    max_step, min_step : float
        Bounds on the step length.
    safety : float
        Factor in ``(0, 1]`` applied to the estimated step.
    """

    order: int | None = None
    abs_tol: float = 1e-16
    rel_tol: float = 1e-16
    max_step: float = 1.0
    min_step: float = 1e-10
    safety: float = 0.9

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must lie in (0, 1]")
        if self.order is not None and self.order < 4:
            raise ValueError("order must be at least 4")

    @property
    def tol(self) -> float:
        return min(self.abs_tol, self.rel_tol)

    @property
    def N(self) -> int:
        if self.order is not None:
            return int(self.order)
        return int(min(40, max(8, math.ceil(-math.log(self.tol) / 2))))

    def with_tol(self, tol: float) -> "TaylorPolicy":
        return replace(self, abs_tol=tol, rel_tol=tol)


def default_policy(ctx=None) -> TaylorPolicy:
    """Integration tolerance ``1e-16`` in double, ``eps_mach**0.85`` beyond."""
    ctx = ctx or get_context()
    if ctx.is_double:
        return TaylorPolicy()
    return TaylorPolicy().with_tol(max(ctx.eps ** 0.85, 1e-300))


@dataclass
class FlowState:
    """Point of a batch of trajectories.

    ``x`` and ``y`` have shape ``(J, m)``: ``J = 1`` for values only,
    ``J = 4`` for values plus partials w.r.t. ``(beta0, gamma0, e)``.
    """

    tau: object
    x: np.ndarray
    y: np.ndarray

    @property
    def jets(self) -> bool:
        return self.x.shape[0] > 1


# ---------------------------------------------------------------------------
# scalar power series with an e-partial: pairs (v, de) of 1-D arrays


def _sconv(a, b, N):
    return np.convolve(a, b)[: N + 1]


def _smul(a, b, N):
    return (_sconv(a[0], b[0], N), _sconv(a[0], b[1], N) + _sconv(a[1], b[0], N))


def _sadd(a, b):
    return (a[0] + b[0], a[1] + b[1])


def _ssub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def _sscale(c, a):
    """``c * a`` with ``c = (cv, cde)`` a scalar jet."""
    return (c[0] * a[0], c[0] * a[1] + c[1] * a[0])


def _srecip(a, N):
    """Reciprocal of a series with jets (``a[0][0] != 0``)."""
    av, ad = a
    rv = av.copy()
    rd = ad.copy()
    inv0 = 1 / av[0]
    rv[0] = inv0
    for k in range(1, N + 1):
        rv[k] = -np.dot(av[1 : k + 1], rv[k - 1 :: -1]) * inv0
    # d/de of (a r = 1): r' = -r (a' r) ... computed as -r * (a' * r)
    t = _sconv(ad, rv, N)
    rd = -_sconv(rv, t, N)
    return (rv, rd)


class FullForcing:
    """Forcing series of the full model in the eccentric anomaly."""

    def __init__(self, params: ModelParams, ctx=None):
        ctx = ctx or get_context()
        self.ctx = ctx
        self.e = ctx.scalar(params.ecc)
        self.eps = ctx.scalar(params.eps)
        self.eta = ctx.scalar(params.eta)
        self._fact = None

    def _inv_factorials(self, N):
        if self._fact is None or len(self._fact) < N + 1:
            self._fact = self.ctx.array([1 / self.ctx.scalar(factorial(k)) for k in range(N + 1)])
        return self._fact[: N + 1]

    def series(self, u0, N):
        ctx, e, eps, eta = self.ctx, self.e, self.eps, self.eta
        c, s = cos(u0), sin(u0)
        cyc_c = [c, -s, -c, s]
        cyc_s = [s, c, -s, -c]
        inv = self._inv_factorials(N)
        cu = ctx.array([cyc_c[k % 4] for k in range(N + 1)]) * inv
        su = ctx.array([cyc_s[k % 4] for k in range(N + 1)]) * inv
        delta = ctx.zeros(N + 1)
        delta[0] = ctx.scalar(1)
        sq = sqrt(1 - e * e)
        sqj = (sq, -e / sq)
        D = (delta - e * cu, -cu)
        R = _srecip(D, N)
        R2 = _smul(R, R, N)
        R3 = _smul(R2, R, N)
        R5 = _smul(R3, R2, N)
        R6 = _smul(R5, R, N)
        p = (cu - e * delta, -delta)
        q = (sq * su, sqj[1] * su)
        pq = _smul(p, q, N)
        diff = _ssub(_smul(p, p, N), _smul(q, q, N))
        U1 = _smul(diff, R3, N)
        U1 = (eps * U1[0], eps * U1[1])
        U2 = _smul(pq, R3, N)
        U2 = (2 * eps * U2[0], 2 * eps * U2[1])
        A = _smul((e * su, su), R, N)
        A = (A[0] - eta * R5[0], A[1] - eta * R5[1])
        Dt = _sscale((eta * sq, eta * sqj[1]), R6)
        return A, U1, U2, Dt


class AveragedForcing:
    """Forcing series of the averaged model in time.

    The eccentric anomaly is obtained from Kepler's equation at the start
    of every step; its series follows from ``du/dt = 1/(1 - e cos u)``.
    """

    def __init__(self, params: ModelParams, ctx=None):
        ctx = ctx or get_context()
        self.ctx = ctx
        self.e = ctx.scalar(params.ecc)
        self.eps = ctx.scalar(params.eps)
        self.eta = ctx.scalar(params.eta)
        ej = Jet.variable(self.e, 0, 1)
        nb, lb = nbar_lbar(ej)
        self.nbar = (nb.val, nb.d[0])
        self.lbar = (lb.val, lb.d[0])

    def series(self, t0, N):
        ctx, e, eps, eta = self.ctx, self.e, self.eps, self.eta
        uv = ctx.zeros(N + 1)
        ud = ctx.zeros(N + 1)
        cv, cd = ctx.zeros(N + 1), ctx.zeros(N + 1)
        sv, sd = ctx.zeros(N + 1), ctx.zeros(N + 1)
        Rv, Rd = ctx.zeros(N + 1), ctx.zeros(N + 1)
        Dv, Dd = ctx.zeros(N + 1), ctx.zeros(N + 1)
        u0 = kepler_solve(t0, e)
        c0, s0 = cos(u0), sin(u0)
        uv[0] = u0
        ud[0] = s0 / (1 - e * c0)
        for k in range(N + 1):
            if k == 0:
                cv[0], sv[0] = c0, s0
                cd[0], sd[0] = -s0 * ud[0], c0 * ud[0]
            else:
                j = np.arange(1, k + 1)
                wv = uv[1 : k + 1] * j
                wd = ud[1 : k + 1] * j
                sv[k] = np.dot(wv, cv[k - 1 :: -1]) / k
                sd[k] = (np.dot(wv, cd[k - 1 :: -1]) + np.dot(wd, cv[k - 1 :: -1])) / k
                cv[k] = -np.dot(wv, sv[k - 1 :: -1]) / k
                cd[k] = -(np.dot(wv, sd[k - 1 :: -1]) + np.dot(wd, sv[k - 1 :: -1])) / k
            Dv[k] = -e * cv[k] + (1 if k == 0 else 0)
            Dd[k] = -cv[k] - e * cd[k]
            if k == 0:
                Rv[0] = 1 / Dv[0]
                Rd[0] = -Rv[0] * Rv[0] * Dd[0]
            else:
                Rv[k] = -np.dot(Dv[1 : k + 1], Rv[k - 1 :: -1]) / Dv[0]
                Rd[k] = -(np.dot(Dd[: k + 1], Rv[k::-1]) + np.dot(Dv[1 : k + 1], Rd[k - 1 :: -1])) / Dv[0]
            if k < N:
                uv[k + 1] = Rv[k] / (k + 1)
                ud[k + 1] = Rd[k] / (k + 1)
        delta = ctx.zeros(N + 1)
        delta[0] = ctx.scalar(1)
        sq = sqrt(1 - e * e)
        R = (Rv, Rd)
        R2 = _smul(R, R, N)
        R3 = _smul(R2, R, N)
        R5 = _smul(R3, R2, N)
        p = (cv - e * delta, cd - delta)
        q = (sq * sv, sq * sd - (e / sq) * sv)
        diff = _ssub(_smul(p, p, N), _smul(q, q, N))
        pq = _smul(p, q, N)
        U1 = _smul(diff, R5, N)
        U1 = (eps * U1[0], eps * U1[1])
        U2 = _smul(pq, R5, N)
        U2 = (2 * eps * U2[0], 2 * eps * U2[1])
        A = (-eta * self.lbar[0] * delta, -eta * self.lbar[1] * delta)
        Dt = (eta * self.nbar[0] * delta, eta * self.nbar[1] * delta)
        return A, U1, U2, Dt


# ---------------------------------------------------------------------------
# state series


def _uconv(P, U, jets):
    """``sum_j P_j U_{k-j}`` for a state series ``P`` (k+1, J, m) and a
    reversed forcing slice ``U = (v, de)``."""
    r = np.tensordot(U[0], P, axes=(0, 0))
    if jets:
        r[3] = r[3] + np.tensordot(U[1], P[:, 0], axes=(0, 0))
    return r


def _jconv(P, Q, jets):
    """``sum_j P_j Q_j`` with the first-order product rule on jets."""
    Pv, Qv = P[:, 0], Q[:, 0]
    v = (Pv * Qv).sum(axis=0)
    if not jets:
        return v[None]
    d = (Pv[:, None] * Q[:, 1:] + P[:, 1:] * Qv[:, None]).sum(axis=0)
    return np.concatenate([v[None], d], axis=0)


def taylor_coefficients(x0, y0, forcing_series, N):
    """Normalised Taylor coefficients of ``(x, y)`` up to order ``N``.

    Parameters
    ----------
    x0, y0 : ndarray, shape (J, m)
        Initial values (and partials if ``J == 4``).
    forcing_series : tuple
        ``(A, U1, U2, D)`` as returned by a forcing object.
    N : int
        Order.

    Returns
    -------
    X, Y : ndarray, shape (N + 1, J, m)
    """
    A, U1, U2, D = forcing_series
    J, m = x0.shape
    jets = J > 1
    dtype = x0.dtype
    X = np.empty((N + 1, J, m), dtype=dtype)
    Y = np.empty((N + 1, J, m), dtype=dtype)
    S = np.empty((N, J, m), dtype=dtype)
    C = np.empty((N, J, m), dtype=dtype)
    W = np.empty((N, J, m), dtype=dtype)
    X[0], Y[0] = x0, y0
    rev = lambda ser, k: (ser[0][k::-1], ser[1][k::-1])  # noqa: E731
    for k in range(N):
        if k == 0:
            s0, c0 = sin(2 * x0[0]), cos(2 * x0[0])
            S[0, 0], C[0, 0] = s0, c0
            if jets:
                S[0, 1:] = 2 * c0 * x0[1:]
                C[0, 1:] = -2 * s0 * x0[1:]
        else:
            W[k] = X[k] * (2 * k)
            S[k] = _jconv(W[1 : k + 1], C[k - 1 :: -1], jets) / k
            C[k] = -_jconv(W[1 : k + 1], S[k - 1 :: -1], jets) / k
        F = (
            _uconv(Y[: k + 1], rev(A, k), jets)
            - _uconv(S[: k + 1], rev(U1, k), jets)
            + _uconv(C[: k + 1], rev(U2, k), jets)
        )
        F[0] = F[0] + D[0][k]
        if jets:
            F[3] = F[3] + D[1][k]
        X[k + 1] = Y[k] / (k + 1)
        Y[k + 1] = F / (k + 1)
    return X, Y


def _maxabs(a) -> float:
    if a.dtype == object:
        return max(float(abs(v)) for v in a.reshape(-1))
    return float(np.max(np.abs(a)))


def _horner(Z, h):
    r = Z[-1]
    for k in range(Z.shape[0] - 2, -1, -1):
        r = r * h + Z[k]
    return r


def _step_size(X, Y, policy: TaylorPolicy) -> float:
    N = X.shape[0] - 1
    size = max(_maxabs(X[0]), _maxabs(Y[0]))
    tol = max(policy.abs_tol, policy.rel_tol * size)
    h = policy.max_step
    for k in (N - 1, N):
        nk = max(_maxabs(X[k]), _maxabs(Y[k]))
        if nk > 0:
            h = min(h, (tol / nk) ** (1.0 / k))
    return policy.safety * h


def taylor_step(state: FlowState, forcing, policy: TaylorPolicy, h_max=None):
    """One Taylor step forward (``h_max > 0``) or backward (``h_max < 0``).

    Returns ``(new_state, h_used)``; the step is clipped to ``|h_max|``.
    """
    ctx = get_context()
    N = policy.N
    X, Y = taylor_coefficients(state.x, state.y, forcing.series(state.tau, N), N)
    h = _step_size(X, Y, policy)
    if h < policy.min_step:
        raise IntegrationError(f"step size {h:.3e} below minimum {policy.min_step:.3e}")
    direction = 1
    if h_max is not None:
        direction = 1 if h_max >= 0 else -1
        if h >= abs(to_float(h_max)):
            hs = h_max
        else:
            hs = ctx.scalar(h) * direction
    else:
        hs = ctx.scalar(h)
    new = FlowState(state.tau + hs, _horner(X, hs), _horner(Y, hs))
    return new, hs


def _integrate_chunk(x, y, tau0, tau1, forcing, policy):
    state = FlowState(tau0, x, y)
    while True:
        remaining = tau1 - state.tau
        if remaining == 0:
            break
        state, hs = taylor_step(state, forcing, policy, remaining)
        if hs == remaining:
            state.tau = tau1
            break
    return state.x, state.y


def _seed_jets(ctx, x0, y0, jets):
    m = len(x0)
    J = 1 + NV if jets else 1
    X = ctx.zeros((J, m))
    Y = ctx.zeros((J, m))
    X[0] = x0
    Y[0] = y0
    if jets:
        X[1] = X[1] + 1
        Y[2] = Y[2] + 1
    return X, Y


def _chunk_job(args):
    bits, x0, y0, tau0, tau1, kind, params, policy, jets = args
    ctx = arith.set_precision(bits) if get_context().bits != bits else get_context()
    ctx.activate()
    forcing = _make_forcing(kind, params, ctx)
    X, Y = _seed_jets(ctx, x0, y0, jets)
    return _integrate_chunk(X, Y, tau0, tau1, forcing, policy)


def _make_forcing(kind, params, ctx):
    if kind == "full":
        return FullForcing(params, ctx)
    if kind == "averaged":
        return AveragedForcing(params, ctx)
    raise ValueError(f"unknown model {kind!r}")


def _init_worker(bits):
    arith.set_precision(bits)


_pool = None
_pool_key = None


def _get_pool(workers, bits):
    global _pool, _pool_key
    if _pool_key != (workers, bits):
        if _pool is not None:
            _pool.shutdown()
        _pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(bits,))
        _pool_key = (workers, bits)
    return _pool


def default_workers() -> int:
    env = os.environ.get("SPINORBIT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def flow_batch(x0, y0, tau0, tau1, params: ModelParams, policy: TaylorPolicy | None = None,
               jets=False, model="full", workers=None, chunk=CHUNK):
    """Integrate many trajectories from ``tau0`` to ``tau1``.

    Parameters
    ----------
    x0, y0 : array_like, shape (m,)
        Initial conditions.
    params : ModelParams
    jets : bool
        Also transport partials w.r.t. ``(x0, y0, e)``.
    model : {"full", "averaged"}
    workers : int, optional
        Process count; the result does not depend on it.

    Returns
    -------
    x, y : ndarray, shape (J, m)
        Final values (row 0) and partials (rows 1-3 when ``jets``).
    """
    ctx = get_context()
    policy = policy or default_policy(ctx)
    x0 = ctx.array(np.atleast_1d(x0))
    y0 = ctx.array(np.atleast_1d(y0))
    tau0, tau1 = ctx.scalar(tau0), ctx.scalar(tau1)
    m = len(x0)
    workers = workers or default_workers()
    params = params.converted(ctx)
    jobs = [
        (ctx.bits, x0[i : i + chunk], y0[i : i + chunk], tau0, tau1, model, params, policy, jets)
        for i in range(0, m, chunk)
    ]
    if workers > 1 and len(jobs) > 1:
        results = list(_get_pool(workers, ctx.bits).map(_chunk_job, jobs))
    else:
        results = [_chunk_job(j) for j in jobs]
    x = np.concatenate([r[0] for r in results], axis=1)
    y = np.concatenate([r[1] for r in results], axis=1)
    return x, y


def flow_u(state: FlowState, u_target, policy: TaylorPolicy, params: ModelParams, model="full"):
    """Advance ``state`` to ``u_target`` (forward or backward)."""
    ctx = get_context()
    forcing = _make_forcing(model, params.converted(ctx), ctx)
    x, y = _integrate_chunk(state.x, state.y, state.tau, ctx.scalar(u_target), forcing, policy)
    return FlowState(ctx.scalar(u_target), x, y)


# ---------------------------------------------------------------------------
# return maps


@dataclass
class MapResult:
    """Image of a batch under a return map.

    ``jac[i, j]`` is the partial of output ``i`` (x, y) w.r.t. input ``j``
    (x0, y0, e); arrays have length ``m``.
    """

    x: np.ndarray
    y: np.ndarray
    jac: np.ndarray | None = None

    @property
    def D(self):
        """2x2 derivative w.r.t. the initial point, shape (2, 2, m)."""
        return self.jac[:, :2]

    @property
    def De(self):
        """Derivative w.r.t. ``e``, shape (2, m)."""
        return self.jac[:, 2]


def _as_result(x, y, jets):
    jac = None
    if jets:
        jac = np.stack([x[1:], y[1:]], axis=0)
    return MapResult(x[0], y[0], jac)


def map_G(beta0, gamma0, params: ModelParams, policy=None, jets=False, workers=None):
    """Flow of the full model from ``u = 0`` to ``u = 2 pi``."""
    ctx = get_context()
    x, y = flow_batch(beta0, gamma0, 0, 2 * ctx.pi, params, policy, jets, "full", workers)
    return _as_result(x, y, jets)


def variational_convert(jac_bg, beta, gamma, gamma0, u0, u, params: ModelParams, dgamma_du=None,
                        dz_du0=None):
    """Variations of the time-parametrised flow from those in ``u``.

    Converts ``d(beta, gamma)(u)/d(beta0, gamma0, e)`` into
    ``d(x, y)(t)/d(x0, y0, e)`` at fixed times ``t0 = u0 - e sin u0`` and
    ``t = u - e sin u``, where ``y = dx/dt = gamma a/r`` and
    ``y0 = gamma0 / (1 - e cos u0)``.

    Parameters
    ----------
    jac_bg : ndarray, shape (2, 3, ...)
        Partials of ``(beta, gamma)`` at ``u``.
    beta, gamma : state at ``u``; gamma0 : initial ``gamma``.
    dgamma_du : value of ``d gamma/du`` at ``u`` (needed when ``sin u != 0``).
    dz_du0 : ndarray, shape (2, ...), optional
        Partials of ``(beta, gamma)(u)`` w.r.t. the initial instant ``u0``
        (needed when ``sin u0 != 0``).

    Returns
    -------
    ndarray, shape (2, 3, ...)
    """
    e = params.ecc
    cu0, su0 = cos(u0), sin(u0)
    cu, su = cos(u), sin(u)
    r0 = 1 - e * cu0
    R = 1 / (1 - e * cu)
    dB = jac_bg[0]
    dG = jac_bg[1]
    out = np.empty_like(jac_bg)
    out[0, 0] = dB[0]
    out[0, 1] = dB[1] * r0
    out[1, 0] = dG[0] * R
    out[1, 1] = dG[1] * r0 * R
    du0_de = su0 / r0
    du_de = su * R
    dg0_de = -gamma0 * cu0 / r0
    dg0_du0 = gamma0 * e * su0 / r0
    xe = dB[2] + dB[1] * dg0_de + gamma * du_de
    ye = dG[2] * R + gamma * R * R * cu + dG[1] * R * dg0_de
    if su != 0:
        ye = ye + (dgamma_du - gamma * R * e * su) * R * du_de
    if su0 != 0:
        xe = xe + (dz_du0[0] + dB[1] * dg0_du0) * du0_de
        ye = ye + (dz_du0[1] + dG[1] * dg0_du0) * R * du0_de
    out[0, 2] = xe
    out[1, 2] = ye
    return out


class ReturnMap:
    """Return map in the scaled chart ``(xhat, yhat)``.

    Subclasses provide :meth:`__call__` returning a :class:`MapResult`
    whose first component is *not* reduced modulo 1.
    """

    name = "abstract"

    def __init__(self, params: ModelParams, policy: TaylorPolicy | None = None, workers=None):
        self.params = params
        self.policy = policy
        self.workers = workers

    def with_ecc(self, ecc):
        return type(self)(self.params.with_ecc(ecc), self.policy, self.workers)

    def lam(self, ecc=None):
        ecc = self.params.ecc if ecc is None else ecc
        return conformal_factor(ecc, get_context().scalar(self.params.eta))


class FullReturnMap(ReturnMap):
    """``P_e = Psi_e^{-1} G_e Psi_e`` with ``Psi_e = 2 pi diag(1, 1 - e)``."""

    name = "full"

    def __call__(self, xhat, yhat, ecc=None, jets=False):
        ctx = get_context()
        params = self.params if ecc is None else self.params.with_ecc(ecc)
        e = ctx.scalar(params.ecc)
        twopi = 2 * ctx.pi
        xhat = ctx.array(np.atleast_1d(xhat))
        yhat = ctx.array(np.atleast_1d(yhat))
        beta0 = twopi * xhat
        gamma0 = twopi * (1 - e) * yhat
        x, y = flow_batch(beta0, gamma0, 0, twopi, params, self.policy, jets, "full", self.workers)
        res = _as_result(x, y, jets)
        xh = res.x / twopi
        yh = res.y / (twopi * (1 - e))
        jac = None
        if jets:
            # u0 = 0 and u = 2 pi: y = gamma a/r is the time derivative and
            # yhat = y / 2 pi, so the time-variational relations apply.
            pe = params.with_ecc(e)
            _, dg = field_full_u(twopi, res.x, res.y, pe)
            conv = variational_convert(res.jac, res.x, res.y, gamma0, 0, twopi, pe, dgamma_du=dg)
            jac = np.empty_like(conv)
            jac[:, :2] = conv[:, :2]
            jac[:, 2] = conv[:, 2] / twopi
        return MapResult(xh, yh, jac)


class AveragedReturnMap(ReturnMap):
    """Time-``2 pi`` map of the averaged model in the chart
    ``(x / 2 pi, (dx/dt) / 2 pi)``."""

    name = "averaged"

    def __call__(self, xhat, yhat, ecc=None, jets=False):
        ctx = get_context()
        params = self.params if ecc is None else self.params.with_ecc(ecc)
        twopi = 2 * ctx.pi
        xhat = ctx.array(np.atleast_1d(xhat))
        yhat = ctx.array(np.atleast_1d(yhat))
        x, y = flow_batch(twopi * xhat, twopi * yhat, 0, twopi, params, self.policy, jets,
                          "averaged", self.workers)
        res = _as_result(x, y, jets)
        jac = None
        if jets:
            jac = res.jac.copy()
            jac[:, 2] = jac[:, 2] / twopi
        return MapResult(res.x / twopi, res.y / twopi, jac)


def map_P(xhat, yhat, params: ModelParams, policy=None, jets=False, workers=None):
    """Full-model return map in the scaled chart, first component mod 1.

    The reduction uses ``x - round(x)``, i.e. values in ``[-1/2, 1/2]``.
    """
    res = FullReturnMap(params, policy, workers)(xhat, yhat, jets=jets)
    res.x = res.x - arith.rint(res.x)
    return res


# ---------------------------------------------------------------------------
# jet transport goodness test


@dataclass
class GoodnessResult:
    c_h: float
    c_h2: float
    ratio_log2: float
    degenerate: bool


def jet_goodness_test(beta0, gamma0, params: ModelParams, h=1e-7, v=None, policy=None):
    """Compare the first-order jet of ``G_e`` with true images.

    ``c_h = |G(z0) + DG(z0) h v - G(z0 + h v)|`` over ``z = (beta0, gamma0, e)``;
    for first-order jets ``log2(c_h / c_{h/2})`` should be close to 2.
    """
    ctx = get_context()
    if v is None:
        v = [1, 1, 1]
    v = ctx.array(v)
    nv = sqrt(sum(vi * vi for vi in v))
    v = v / nv
    hs = ctx.scalar(h)
    base = map_G(beta0, gamma0, params, policy, jets=True)
    out = []
    for hh in (hs, hs / 2):
        z = [ctx.scalar(beta0) + hh * v[0], ctx.scalar(gamma0) + hh * v[1]]
        e = ctx.scalar(params.ecc) + hh * v[2]
        img = map_G(z[0], z[1], params.with_ecc(e), policy)
        pred_x = base.x[0] + hh * sum(base.jac[0, j, 0] * v[j] for j in range(3))
        pred_y = base.y[0] + hh * sum(base.jac[1, j, 0] * v[j] for j in range(3))
        dx, dy = pred_x - img.x[0], pred_y - img.y[0]
        out.append(float(sqrt(dx * dx + dy * dy)))
    c_h, c_h2 = out
    floor = 100 * ctx.eps * max(1.0, abs(float(base.x[0])), abs(float(base.y[0])))
    degenerate = c_h2 == 0 or c_h == 0
    if c_h2 < floor:
        warnings.warn(
            f"c_h/2 = {c_h2:.3e} is below the precision floor {floor:.3e}; "
            "the ratio is dominated by rounding",
            RuntimeWarning,
            stacklevel=2,
        )
    ratio = math.log2(c_h / c_h2) if not degenerate else float("nan")
    return GoodnessResult(c_h, c_h2, ratio, degenerate)

"""Initial approximations for the Newton method.

* In the integrable limit (``eps = 0``, averaged model) the attractor is
  ``dx/dt = Nbar(e)/Lbar(e)``, so the drift for a frequency ``omega`` solves
  ``Nbar(e)/Lbar(e) = omega``.
* Otherwise an orbit is iterated past its transient, its rotation number
  is measured by a weighted Birkhoff average and the orbit is
  interpolated into an embedding on the Fourier mesh.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .arith import Jet, get_context, to_float
from .flow import AveragedReturnMap, FullReturnMap, TaylorPolicy, default_policy
from .fourier import LiftedCurve
from .model import ModelParams, nbar_lbar

__all__ = [
    "SeedError",
    "OrbitSample",
    "drift_ratio",
    "drift_from_frequency",
    "default_transient",
    "transient_orbit",
    "rotation_number",
    "build_embedding",
    "integrable_guess",
]

log = logging.getLogger(__name__)

MAX_TRANSIENT = 10**7
QUALITY_THRESHOLD = 1e-8


class SeedError(RuntimeError):
    """An initial approximation could not be produced."""


@dataclass
class OrbitSample:
    """Finite orbit of the ``2 pi`` return map in ``(beta, gamma)``.

    Attributes
    ----------
    beta : ndarray
        Angles reduced to ``[0, 2 pi)``.
    gamma : ndarray
    lifted : ndarray
        Unreduced angles, used for rotation numbers.
    params : ModelParams
    transient_len : int
        Number of iterates discarded before ``beta[0]``.
    model : str
    """

    beta: np.ndarray
    gamma: np.ndarray
    lifted: np.ndarray
    params: ModelParams
    transient_len: int = 0
    model: str = "full"

    def __len__(self):
        return len(self.beta)

    @classmethod
    def from_lifted(cls, lifted, gamma, params, transient_len=0, model="full"):
        lifted = np.asarray(lifted)
        twopi = 2 * math.pi if lifted.dtype != object else 2 * get_context().pi
        beta = lifted - twopi * np.floor(np.asarray(to_float(lifted / twopi)))
        return cls(beta, np.asarray(gamma), lifted, params, transient_len, model)


# ---------------------------------------------------------------------------
# drift in the integrable limit


def drift_ratio(e):
    """``Nbar(e)/Lbar(e)``, the attracting spin rate of the averaged model."""
    nbar, lbar = nbar_lbar(e)
    return nbar / lbar


def drift_from_frequency(omega, rtol=None, max_iter=200):
    """Eccentricity with ``Nbar(e)/Lbar(e) = omega``.

    The ratio increases from 1 at ``e = 0`` to infinity as ``e -> 1``.
    A Newton iteration with derivatives from jets is safeguarded by a
    shrinking bracket and falls back to bisection.

    Raises
    ------
    ValueError
        If ``omega < 1`` (no eccentricity gives that frequency).
    """
    ctx = get_context()
    omega = ctx.scalar(omega)
    if omega < 1:
        raise ValueError(f"no eccentricity gives frequency {float(omega)} < 1")
    if omega == 1:
        return ctx.scalar(0)
    rtol = max(1e-14 if ctx.is_double else 0, 8 * ctx.eps) if rtol is None else rtol
    lo, hi = ctx.scalar(0), ctx.scalar(1) - ctx.scalar(2) ** -40
    if drift_ratio(hi) < omega:
        raise ValueError(f"frequency {float(omega)} needs an eccentricity above 1 - 2^-40")
    e = ctx.scalar(0.5)
    for _ in range(max_iter):
        r = drift_ratio(Jet.variable(e, 0, 1))
        f = r.val - omega
        if f > 0:
            hi = e
        else:
            lo = e
        de = r.d[0]
        en = e - f / de if de != 0 else (lo + hi) / 2
        if not lo < en < hi:
            en = (lo + hi) / 2
        if abs(en - e) <= rtol * max(abs(e), ctx.eps):
            return en
        e = en
        if hi - lo <= rtol * abs(e):
            break
    return e


# ---------------------------------------------------------------------------
# orbits


def default_transient(eta, safety=5.0) -> int:
    """``ceil(safety / eta)`` iterates, capped at ``10**7``."""
    eta = float(eta)
    if eta <= 0:
        raise ValueError("a transient needs eta > 0")
    return int(min(MAX_TRANSIENT, math.ceil(safety / eta)))


def _fast_orbit(beta0, gamma0, count, params, policy: TaylorPolicy, escape):
    from ._fastorbit import g_orbit

    return g_orbit(float(beta0), float(gamma0), int(count), float(params.ecc), float(params.eps),
                   float(params.eta), policy.N, policy.abs_tol, policy.rel_tol, policy.max_step,
                   policy.min_step, policy.safety, float(escape))


def _generic_orbit(beta0, gamma0, count, params, policy, escape, model):
    """Orbit through the vectorised return maps (any precision or model)."""
    ctx = get_context()
    twopi = 2 * ctx.pi
    e = ctx.scalar(params.ecc)
    scale = (1 - e) if model == "full" else 1
    rmap = (FullReturnMap if model == "full" else AveragedReturnMap)(params, policy, workers=1)
    betas = [ctx.scalar(beta0)]
    gammas = [ctx.scalar(gamma0)]
    xh, yh = betas[0] / twopi, gammas[0] / (twopi * scale)
    for i in range(count):
        off = ctx.scalar(math.floor(float(xh)))
        res = rmap(xh - off, yh)
        xh, yh = res.x[0] + off, res.y[0]
        g = yh * twopi * scale
        if not abs(float(g)) < escape:
            return ctx.array(betas), ctx.array(gammas), i
        betas.append(xh * twopi)
        gammas.append(g)
    return ctx.array(betas), ctx.array(gammas), count


def transient_orbit(params: ModelParams, n_transient=None, n_keep=4096, start=None,
                    policy: TaylorPolicy | None = None, model="full", escape=1e6,
                    safety=5.0) -> OrbitSample:
    """Iterate the ``2 pi`` map past its transient and keep ``n_keep`` points.

    Parameters
    ----------
    params : ModelParams
        ``eta > 0`` is required.
    n_transient : int, optional
        Iterates to discard; defaults to ``ceil(safety/eta)`` (at most
        ``10**7``).
    start : (beta, gamma), optional
        Initial point; defaults to ``x = 0``, ``dx/dt = Nbar/Lbar``,
        i.e. ``beta = 0``, ``gamma = (1 - e) Nbar/Lbar`` for the full model.
    model : {"full", "averaged"}
        For ``"averaged"`` the coordinates are ``(x, dx/dt)``.

    Raises
    ------
    SeedError
        When the orbit escapes (``|gamma| >= escape`` or the integrator
        fails), i.e. it is not in the rotational regime.
    """
    ctx = get_context()
    if float(params.eta) <= 0:
        raise ValueError("transient_orbit needs eta > 0")
    if n_transient is None:
        n_transient = default_transient(params.eta, safety)
    policy = policy or default_policy(ctx)
    e = ctx.scalar(params.ecc)
    if start is None:
        y0 = drift_ratio(e)
        start = (ctx.scalar(0), (1 - e) * y0 if model == "full" else y0)
    total = int(n_transient) + int(n_keep) - 1
    if ctx.is_double and model == "full":
        lifted, gamma, done = _fast_orbit(start[0], start[1], total, params, policy, escape)
    else:
        lifted, gamma, done = _generic_orbit(start[0], start[1], total, params, policy, escape,
                                             model)
    if done < total:
        raise SeedError(f"orbit escaped the rotational regime after {done} iterates")
    return OrbitSample.from_lifted(lifted[n_transient:], gamma[n_transient:], params,
                                   int(n_transient), model)


# ---------------------------------------------------------------------------
# rotation numbers


def _bump(m):
    s = (np.arange(m) + 1.0) / (m + 1.0)
    return np.exp(-1.0 / (s * (1.0 - s)))


def _weighted_mean(d):
    w = _bump(len(d))
    return float(np.sum(w * d) / np.sum(w))


def rotation_number(orbit, min_len=2**10):
    """Weighted Birkhoff estimate of the rotation number.

    Averages the lifted angle increments (in turns, ``d beta / 2 pi``)
    with the bump ``w(s) = exp(-1/(s(1-s)))``.  ``quality`` is the
    difference between the estimates from the whole orbit and from its
    first half; on a smooth invariant circle it decays faster than any
    power of the length.

    Parameters
    ----------
    orbit : OrbitSample or array_like
        Either an orbit of the return map or directly a sequence of
        lifted angles measured in turns.

    Returns
    -------
    (omega_hat, quality)
    """
    if isinstance(orbit, OrbitSample):
        twopi = 2 * math.pi
        x = np.asarray(to_float(orbit.lifted), dtype=float) / twopi
    else:
        x = np.asarray(to_float(np.asarray(orbit)), dtype=float)
    if len(x) < min_len:
        raise ValueError(f"rotation_number needs at least {min_len} points, got {len(x)}")
    # increments in turns; subtracting the mean first keeps the sum exact
    d = np.diff(x)
    base = (x[-1] - x[0]) / (len(x) - 1)
    full = base + _weighted_mean(d - base)
    half = base + _weighted_mean(d[: len(d) // 2] - base)
    return full, abs(full - half)


def is_circle_like(quality, threshold=QUALITY_THRESHOLD) -> bool:
    return bool(quality < threshold)


# ---------------------------------------------------------------------------
# interpolation of an orbit into an embedding


def _fold_count(order):
    """Cyclic descents of the successor permutation of a sorted orbit.

    ``order`` lists orbit indices sorted by angle.  On an invariant
    circle the map preserves the cyclic order, so the positions of the
    successors of the sorted points increase cyclically (at most one
    descent).
    """
    m = len(order)
    pos = np.empty(m, dtype=np.int64)
    pos[order] = np.arange(m)
    valid = order[order < m - 1]
    succ = pos[valid + 1]
    return int(np.sum(np.diff(succ) < 0))


def build_embedding(orbit: OrbitSample, n_theta: int, j: int = 4, check_graph=True) -> LiftedCurve:
    """Interpolate an orbit into a lifted curve on the mesh ``k/n_theta``.

    Points are sorted by ``beta``; at each mesh angle ``2 pi k/n`` the
    value of ``gamma`` is obtained by Lagrange interpolation on ``2 j``
    consecutive sorted samples centred at the mesh angle, wrapping
    indices modulo the number of samples.  The result is expressed in
    the scaled chart: ``K(theta) = (theta, gamma/(2 pi (1 - e)))`` for the
    full model and ``(theta, (dx/dt)/(2 pi))`` for the averaged one.

    Raises
    ------
    SeedError
        On repeated angles with different ``gamma`` or when the orbit is
        not a graph over the angle.
    """
    ctx = get_context()
    beta = ctx.array(orbit.beta)
    gamma = ctx.array(orbit.gamma)
    m = len(beta)
    if 2 * j > m:
        raise ValueError(f"need at least {2 * j} points, got {m}")
    order = np.argsort(np.asarray(to_float(beta), dtype=float), kind="stable")
    if check_graph:
        folds = _fold_count(order)
        if folds > max(1, m // 100):
            raise SeedError(f"orbit is not a graph over the angle ({folds} order inversions)")
    bs, gs = beta[order], gamma[order]
    keep = np.ones(m, dtype=bool)
    same = np.asarray(to_float(bs[1:] - bs[:-1])) == 0
    if np.any(same):
        if np.any(np.asarray(to_float(gs[1:] - gs[:-1]))[same] != 0):
            raise SeedError("repeated angle with different gamma")
        keep[1:][same] = False
        bs, gs = bs[keep], gs[keep]
        m = len(bs)
    twopi = 2 * ctx.pi
    bf = np.asarray(to_float(bs), dtype=float)
    n = int(n_theta)
    out = []
    for k in range(n):
        bk = twopi * k / n
        c = int(np.searchsorted(bf, float(bk)))
        idx = np.arange(c - j, c + j)
        wrap = np.floor_divide(idx, m)
        idx = idx - wrap * m
        xs = [bs[i] + w * twopi for i, w in zip(idx, wrap)]
        ys = [gs[i] for i in idx]
        val = 0
        for a in range(2 * j):
            la = 1
            for b in range(2 * j):
                if b != a:
                    la = la * (bk - xs[b]) / (xs[a] - xs[b])
            val = val + la * ys[a]
        out.append(val)
    g = ctx.array(out)
    e = ctx.scalar(orbit.params.ecc)
    scale = twopi * (1 - e) if orbit.model == "full" else twopi
    return LiftedCurve(ctx.zeros(n), g / scale)


def integrable_guess(omega, n: int):
    """Drift and flat embedding of the averaged model at ``eps = 0``.

    Returns ``(ecc, K)`` with ``K(theta) = (theta, omega/(2 pi))``, the
    exact attractor of the averaged model; it is also the starting point
    of continuations of the full model.
    """
    ctx = get_context()
    omega = ctx.scalar(omega)
    e = drift_from_frequency(omega)
    return e, LiftedCurve.rotation(n, omega / (2 * ctx.pi))

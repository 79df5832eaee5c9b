"""Continuation in the ellipticity, sweeps and model comparisons.

``continue_in_eps`` follows a family of invariant attractors
``(K_eps, e_eps)`` with fixed frequency while ``eps`` grows.  Each step
predicts the next solution by linear extrapolation, corrects it with
Newton's method, halves the step on failure and doubles the number of
Fourier modes when the interlaced-mesh check or the coefficient tail
shows that the mesh no longer resolves the curve.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import fourier as fr
from .arith import get_context
from .flow import AveragedReturnMap, FullReturnMap, IntegrationError, ReturnMap
from .kam import DegeneracyError, NewtonDivergence, TorusSolution, default_tolerance, newton_solve
from .model import ModelParams, nbar_lbar
from .seed import SeedError, drift_ratio, integrable_guess, rotation_number, transient_orbit

__all__ = [
    "ContinuationRun",
    "StepRecord",
    "continue_in_eps",
    "solve_at",
    "start_family",
    "sweep_drift_vs_frequency",
    "compare_averaged",
    "AveragingCheck",
    "averaging_transform_check",
]

log = logging.getLogger(__name__)

DEPS0 = 1e-3
MAX_HALVINGS = 12
SNAP = 1e-6
STALL_GAIN = 1e-2


@dataclass
class StepRecord:
    """One attempted continuation step."""

    eps: float
    n: int
    status: str
    E_sup: float = float("nan")
    err_interlaced: float = float("nan")
    iterations: int = 0
    seconds: float = 0.0


@dataclass
class ContinuationRun:
    """Accepted solutions and the log of attempted steps.

    ``stopped`` is ``"target"`` when ``eps_target`` was reached and
    ``"underflow"`` when the step fell below ``deps0 / 2**max_halvings``.
    """

    family: list = field(default_factory=list)
    schedule: list = field(default_factory=list)
    deps: float = DEPS0
    halvings: int = 0
    modes: list = field(default_factory=list)
    stopped: str = ""

    @property
    def last(self) -> TorusSolution:
        return self.family[-1]

    @property
    def last_good_eps(self) -> float:
        return float(self.last.params.eps)


def _map_at(rmap: ReturnMap, eps, ecc=None):
    params = replace(rmap.params, eps=eps)
    if ecc is not None:
        params = params.with_ecc(ecc)
    return type(rmap)(params, rmap.policy, rmap.workers)


def _resolved(sol: TorusSolution, tol, tail_factor=1.0):
    """Whether the mesh resolves the solution: interlaced error and the
    size of the top quarter of Fourier coefficients both below ``10 tol``."""
    c1, c2 = sol.K.coeffs()
    tail = max(fr.tail_norm(c1), fr.tail_norm(c2))
    ok_int = not (sol.err_interlaced >= 10 * tol)
    return ok_int and tail < 10 * tol * tail_factor, tail


def _stall_retry(exc, tol, adapt_modes, n_max):
    """Restart point on a finer mesh after a truncation-limited stall.

    Newton stalls at the truncation error of the mesh when the mesh is too
    coarse for ``tol``.  This is recognised as a stall after real progress
    (best error at least ``STALL_GAIN`` below the first) whose best iterate
    is not resolved.  Returns ``(K, ecc)`` on the doubled mesh, or None.
    """
    if not adapt_modes or exc.best is None or exc.first_error is None:
        return None
    K, ecc, err = exc.best
    if not err <= STALL_GAIN * exc.first_error or 2 * K.n > n_max:
        return None
    c1, c2 = K.coeffs()
    tail = max(fr.tail_norm(c1), fr.tail_norm(c2))
    if tail < 10 * tol:
        return None
    log.info("n=%d stalled at %.2e with tail %.2e; doubling", K.n, err, tail)
    return K.resampled(2 * K.n), ecc


def solve_at(K0, ecc0, rmap: ReturnMap, omega, tol=None, max_iter=20, adapt_modes=True,
             n_max=4096):
    """Newton solve with mesh doubling until the solution is resolved.

    Returns ``(solution, resolved)``.
    """
    tol = default_tolerance(get_context().bits) if tol is None else tol
    K = K0
    while True:
        try:
            sol = newton_solve(K, ecc0, rmap, omega, tol=tol, max_iter=max_iter)
        except NewtonDivergence as exc:
            retry = _stall_retry(exc, tol, adapt_modes, n_max)
            if retry is None:
                raise
            K, ecc0 = retry
            continue
        ok, tail = _resolved(sol, tol)
        if ok or not adapt_modes or 2 * K.n > n_max:
            return sol, ok
        log.info("n=%d not resolved (interlaced %.2e, tail %.2e); doubling", K.n,
                 sol.err_interlaced, tail)
        K = sol.K.resampled(2 * K.n)
        ecc0 = sol.ecc


def start_family(omega, eta, n=64, model="full", policy=None, tol=None, workers=None):
    """Converged attractor at ``eps = 0``.

    The averaged model has the exact flat attractor ``(theta, omega/2pi)``
    at ``e`` with ``Nbar/Lbar = omega``; for the full model this is an
    ``O(eta^2)`` approximation which Newton's method corrects.
    """
    ctx = get_context()
    e, K = integrable_guess(omega, n)
    cls = FullReturnMap if model == "full" else AveragedReturnMap
    rmap = cls(ModelParams(eps=ctx.scalar(0), eta=ctx.scalar(eta), ecc=e, omega=omega),
               policy, workers)
    sol, _ = solve_at(K, e, rmap, ctx.scalar(omega), tol=tol, adapt_modes=False)
    return sol, rmap


def _predict(family, eps_next):
    """Linear extrapolation in eps of ``(p1, p2, e)``."""
    s1 = family[-1]
    if len(family) < 2:
        return s1.K, s1.ecc
    s0 = family[-2]
    K0 = s0.K if s0.K.n == s1.K.n else s0.K.resampled(s1.K.n)
    e0, e1 = s0.params.eps, s1.params.eps
    if abs(e1 - e0) <= SNAP * abs(eps_next - e1):
        return s1.K, s1.ecc
    r = (eps_next - e1) / (e1 - e0)
    K = fr.LiftedCurve(s1.K.p1 + r * (s1.K.p1 - K0.p1), s1.K.p2 + r * (s1.K.p2 - K0.p2))
    return K, s1.ecc + r * (s1.ecc - s0.ecc)


def continue_in_eps(start: TorusSolution, rmap: ReturnMap, eps_target, deps0=DEPS0,
                    max_halvings=MAX_HALVINGS, eps_stops=(), tol=None, adapt_modes=True,
                    n_max=2048, max_iter=12, regrow=True, callback=None) -> ContinuationRun:
    """Continue an attractor in ``eps`` up to ``eps_target``.

    Parameters
    ----------
    start : TorusSolution
        Converged solution; its ``params.eps`` is the starting value.
    rmap : ReturnMap
        Map of the model to follow (its ``eps`` and ``ecc`` are replaced).
    eps_target : scalar
    deps0 : float
        Initial step; a failed step halves it and a successful one
        doubles it again (never above ``deps0``).
    max_halvings : int
        The run stops with ``stopped = "underflow"`` once the step falls
        below ``deps0 / 2**max_halvings``.
    eps_stops : iterable
        Values that the schedule must land on exactly.
    adapt_modes : bool
        Double ``n`` (up to ``n_max``) when a converged step is not
        resolved by the mesh; an unresolved step at ``n_max`` counts as a
        failure.
    callback : callable, optional
        Called as ``callback(run, record)`` after every attempt.
    """
    ctx = get_context()
    tol = default_tolerance(ctx.bits) if tol is None else tol
    eps_target = ctx.scalar(eps_target)
    stops = sorted(ctx.scalar(s) for s in eps_stops if ctx.scalar(s) < eps_target)
    run = ContinuationRun(family=[start], deps=deps0, modes=[start.K.n])
    deps_min = deps0 / 2**max_halvings
    omega = start.omega
    eps = ctx.scalar(start.params.eps)
    deps = deps0
    while eps < eps_target:
        nxt = eps + ctx.scalar(deps)
        # a stop within rounding of the step end is taken exactly, so that
        # no vanishing step follows
        near = nxt + ctx.scalar(deps) * SNAP
        for s in stops + [eps_target]:
            if eps < s <= near:
                nxt = s
                break
        K, e = _predict(run.family, nxt)
        t0 = time.perf_counter()
        status, sol = "ok", None
        try:
            sol, ok = solve_at(K, e, _map_at(rmap, nxt), omega, tol=tol, max_iter=max_iter,
                               adapt_modes=adapt_modes, n_max=n_max)
            if not ok:
                status = "unresolved"
        except (NewtonDivergence, DegeneracyError, IntegrationError, ArithmeticError,
                ValueError) as exc:
            status = f"failed: {exc}"
        rec = StepRecord(float(nxt), K.n if sol is None else sol.n, status,
                         seconds=time.perf_counter() - t0)
        if sol is not None:
            rec.E_sup, rec.err_interlaced, rec.iterations = (sol.err_grid, sol.err_interlaced,
                                                            sol.iterations)
        run.schedule.append(rec)
        if status == "ok":
            sol.seconds = rec.seconds
            run.family.append(sol)
            run.modes.append(sol.n)
            eps = nxt
            if regrow:
                deps = min(deps0, 2 * deps)
            log.info("eps=%.6e e=%.9f n=%d accepted", float(eps), float(sol.ecc), sol.n)
        else:
            deps = deps / 2
            run.halvings += 1
            log.info("eps=%.6e rejected (%s); step %.3e", float(nxt), status, deps)
        run.deps = deps
        if callback is not None:
            callback(run, rec)
        if deps < deps_min:
            run.stopped = "underflow"
            return run
    run.stopped = "target"
    return run


# ---------------------------------------------------------------------------
# drift versus rotation number


def sweep_drift_vs_frequency(eta, eps, e_grid, n_transient=None, n_keep=4096, policy=None):
    """Rotation number of the attractor of the full model for each ``e``.

    Returns rows ``(e, omega_hat, quality, Nbar/Lbar)``; a point whose
    orbit escapes gets ``nan`` estimates and the sweep goes on.
    """
    ctx = get_context()
    rows = []
    for e in e_grid:
        params = ModelParams(eps=ctx.scalar(eps), eta=ctx.scalar(eta), ecc=ctx.scalar(e))
        ratio = float(drift_ratio(ctx.scalar(e)))
        try:
            orbit = transient_orbit(params, n_transient, n_keep, policy=policy)
            om, q = rotation_number(orbit)
        except SeedError as exc:
            log.warning("e=%s: %s", e, exc)
            om, q = float("nan"), float("nan")
        rows.append((float(e), om, q, ratio))
    return rows


# ---------------------------------------------------------------------------
# averaged versus full model


def compare_averaged(omega, eta, eps_list, n=64, tol=None, policy=None, deps0=DEPS0,
                     workers=None, n_max=1024):
    """Drift of the full and of the averaged model at each ``eps``.

    Both families are continued from their ``eps = 0`` attractors and
    land exactly on the requested values.  Returns rows
    ``(eps, e_full, e_avg, diff, flag)`` with ``diff = e_full - e_avg``
    and ``flag`` empty unless a side failed.
    """
    ctx = get_context()
    eps_list = sorted(ctx.scalar(x) for x in eps_list)
    results = {}
    for model in ("full", "averaged"):
        sol, rmap = start_family(omega, eta, n=n, model=model, policy=policy, tol=tol,
                                 workers=workers)
        run = continue_in_eps(sol, rmap, eps_list[-1], deps0=deps0, eps_stops=eps_list, tol=tol,
                              n_max=n_max)
        results[model] = {ctx.format(s.params.eps): s.ecc for s in run.family}
    rows = []
    for x in eps_list:
        key = ctx.format(x)
        ef = results["full"].get(key)
        ea = results["averaged"].get(key)
        if ef is None or ea is None:
            rows.append((x, ef, ea, None, "diverged"))
        else:
            rows.append((x, ef, ea, ef - ea, ""))
    return rows


# ---------------------------------------------------------------------------
# exact averaging change of variables


@dataclass
class AveragingCheck:
    """Outcome of :func:`averaging_transform_check`."""

    max_discrepancy: float
    gamma_start: float
    gamma_end: float
    abar: float
    abar_quadrature: float


def averaging_transform_check(params: ModelParams, t_span=None, x0=0.3, v0=None, rtol=1e-13,
                              atol=1e-15, n_check=2001) -> AveragingCheck:
    """Check the change of variables that averages the dissipation.

    The full model in time reads ``x'' + a(t) x' + F(x, t) = 0`` with
    ``a = eta (a/r)^6`` and ``F = eps (a/r)^3 sin(2x - 2f) - eta (a/r)^6 f'``.
    With ``abar`` the mean of ``a`` and
    ``gamma(t) = exp(-1/2 int_0^t (a - abar))``, the function ``y = x/gamma``
    solves ``y'' + abar y' + G(y, t) = 0`` where
    ``G = ((gamma'' + a gamma')/gamma) y + F(gamma y, t)/gamma``.
    Both equations are integrated independently (DOP853) and
    ``max |x - gamma y|`` over ``t_span`` is returned together with
    ``gamma(0)`` and ``gamma(2 pi)``.

    The eccentric anomaly and ``int (a - abar)`` are carried as extra
    states, so no Kepler solve is needed inside the right-hand side.
    """
    from scipy.integrate import quad, solve_ivp

    e, eps, eta = float(params.ecc), float(params.eps), float(params.eta)
    t_span = (0.0, 2 * math.pi) if t_span is None else tuple(map(float, t_span))
    _, lbar = nbar_lbar(e)
    abar = eta * float(lbar)
    # quadrature oracle for the mean of a(t): dt = (r/a) du
    q, _ = quad(lambda u: (1 - e * math.cos(u)) ** -5, 0, 2 * math.pi, epsabs=0, epsrel=1e-13,
                limit=200)
    abar_q = eta * q / (2 * math.pi)
    sq = math.sqrt(1 - e * e)

    def kepler_terms(u):
        cu, su = math.cos(u), math.sin(u)
        R = 1 / (1 - e * cu)
        cosf, sinf = (cu - e) * R, sq * su * R
        return cu, su, R, cosf, sinf

    def a_F(x, u):
        cu, su, R, cosf, sinf = kepler_terms(u)
        c2f, s2f = 2 * cosf * cosf - 1, 2 * sinf * cosf
        s = math.sin(2 * x) * c2f - math.cos(2 * x) * s2f
        fdot = R * R * sq
        a = eta * R**6
        return a, eps * R**3 * s - a * fdot, R, su

    def rhs_x(t, z):
        x, v, u, _ = z
        a, F, R, _ = a_F(x, u)
        return [v, -a * v - F, R, a - abar]

    def rhs_y(t, z):
        y, w, u, I = z
        g = math.exp(-0.5 * I)
        a0, _, R, su = a_F(0.0, u)
        a_dot = -6 * eta * e * su * R**8
        # (gamma'' + a gamma')/gamma with gamma'/gamma = -(a - abar)/2
        coef = -0.5 * a_dot + 0.25 * (a0 - abar) ** 2 - 0.5 * a0 * (a0 - abar)
        _, F, _, _ = a_F(g * y, u)
        G = coef * y + F / g
        return [w, -abar * w - G, R, a0 - abar]

    if v0 is None:
        v0 = float(drift_ratio(e))
    a_start = eta * (1 - e) ** -6
    kw = dict(method="DOP853", rtol=rtol, atol=atol, dense_output=True)
    # integrate from t = 0 so that gamma(0) = 1 and u(0) = 0
    t_end = max(t_span[1], 2 * math.pi)
    sx = solve_ivp(rhs_x, (0.0, t_end), [x0, v0, 0.0, 0.0], **kw)
    sy = solve_ivp(rhs_y, (0.0, t_end), [x0, v0 + 0.5 * (a_start - abar) * x0, 0.0, 0.0], **kw)
    if not (sx.success and sy.success):
        raise RuntimeError("integration failed: " + (sx.message if not sx.success else sy.message))
    ts = np.linspace(t_span[0], t_span[1], n_check)
    zx, zy = sx.sol(ts), sy.sol(ts)
    gam = np.exp(-0.5 * zy[3])
    disc = float(np.max(np.abs(zx[0] - gam * zy[0])))
    g_end = math.exp(-0.5 * float(sy.sol(2 * math.pi)[3]))
    return AveragingCheck(disc, 1.0, g_end, abar, abar_q)

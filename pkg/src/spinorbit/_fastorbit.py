"""Compiled double-precision orbit kernel for the full model.

Long orbits of a single point (transients, rotation numbers) are
dominated by interpreter overhead in the vectorised integrator, so this
module repeats the same Taylor recurrences and step-size rule for one
trajectory without jets, compiled with numba.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _conv(a, b, k):
    s = 0.0
    for j in range(k + 1):
        s += a[j] * b[k - j]
    return s


@njit(cache=True)
def _mul(a, b, out, N):
    for k in range(N + 1):
        out[k] = _conv(a, b, k)


@njit(cache=True)
def _forcing(u0, e, eps, eta, N, A, U1, U2, D):
    cu = np.empty(N + 1)
    su = np.empty(N + 1)
    c, s = math.cos(u0), math.sin(u0)
    fact = 1.0
    for k in range(N + 1):
        if k > 0:
            fact *= k
        m = k % 4
        if m == 0:
            cu[k], su[k] = c, s
        elif m == 1:
            cu[k], su[k] = -s, c
        elif m == 2:
            cu[k], su[k] = -c, -s
        else:
            cu[k], su[k] = s, -c
        cu[k] /= fact
        su[k] /= fact
    sq = math.sqrt(1.0 - e * e)
    Dd = -e * cu
    Dd[0] += 1.0
    R = np.empty(N + 1)
    R[0] = 1.0 / Dd[0]
    for k in range(1, N + 1):
        acc = 0.0
        for j in range(1, k + 1):
            acc += Dd[j] * R[k - j]
        R[k] = -acc * R[0]
    R2 = np.empty(N + 1)
    R3 = np.empty(N + 1)
    R5 = np.empty(N + 1)
    R6 = np.empty(N + 1)
    _mul(R, R, R2, N)
    _mul(R2, R, R3, N)
    _mul(R3, R2, R5, N)
    _mul(R5, R, R6, N)
    p = cu.copy()
    p[0] -= e
    q = sq * su
    pp = np.empty(N + 1)
    qq = np.empty(N + 1)
    pq = np.empty(N + 1)
    _mul(p, p, pp, N)
    _mul(q, q, qq, N)
    _mul(p, q, pq, N)
    diff = pp - qq
    _mul(diff, R3, U1, N)
    _mul(pq, R3, U2, N)
    esu = e * su
    _mul(esu, R, A, N)
    for k in range(N + 1):
        U1[k] *= eps
        U2[k] *= 2.0 * eps
        A[k] -= eta * R5[k]
        D[k] = eta * sq * R6[k]


@njit(cache=True)
def _coefficients(x0, y0, A, U1, U2, D, N, X, Y, S, C):
    X[0], Y[0] = x0, y0
    S[0], C[0] = math.sin(2.0 * x0), math.cos(2.0 * x0)
    for k in range(N):
        if k > 0:
            s = 0.0
            c = 0.0
            for j in range(1, k + 1):
                w = 2.0 * j * X[j]
                s += w * C[k - j]
                c -= w * S[k - j]
            S[k] = s / k
            C[k] = c / k
        f = D[k]
        for j in range(k + 1):
            f += Y[j] * A[k - j] - S[j] * U1[k - j] + C[j] * U2[k - j]
        X[k + 1] = Y[k] / (k + 1)
        Y[k + 1] = f / (k + 1)


@njit(cache=True)
def _flow_2pi(x, y, e, eps, eta, N, abs_tol, rel_tol, max_step, min_step, safety, work):
    A, U1, U2, D, X, Y, S, C = work
    twopi = 2.0 * math.pi
    u = 0.0
    while True:
        _forcing(u, e, eps, eta, N, A, U1, U2, D)
        _coefficients(x, y, A, U1, U2, D, N, X, Y, S, C)
        size = max(abs(X[0]), abs(Y[0]))
        tol = max(abs_tol, rel_tol * size)
        h = max_step
        for k in (N - 1, N):
            nk = max(abs(X[k]), abs(Y[k]))
            if nk > 0:
                h = min(h, (tol / nk) ** (1.0 / k))
        h *= safety
        if h < min_step:
            return x, y, False
        last = False
        if h >= twopi - u:
            h = twopi - u
            last = True
        xn = X[N]
        yn = Y[N]
        for k in range(N - 1, -1, -1):
            xn = xn * h + X[k]
            yn = yn * h + Y[k]
        x, y = xn, yn
        if last:
            return x, y, True
        u += h


@njit(cache=True)
def g_orbit(beta0, gamma0, n_iter, e, eps, eta, N, abs_tol, rel_tol, max_step, min_step,
            safety, escape):
    """Iterate the 2 pi map ``n_iter`` times; returns unreduced betas,
    gammas and the number of completed iterates."""
    betas = np.empty(n_iter + 1)
    gammas = np.empty(n_iter + 1)
    betas[0], gammas[0] = beta0, gamma0
    work = (np.empty(N + 1), np.empty(N + 1), np.empty(N + 1), np.empty(N + 1),
            np.empty(N + 1), np.empty(N + 1), np.empty(N), np.empty(N))
    x, y = beta0, gamma0
    twopi = 2.0 * math.pi
    for i in range(n_iter):
        # integrate with the angle reduced, then restore the lift
        xr = x - twopi * math.floor(x / twopi)
        xs, ys, ok = _flow_2pi(xr, y, e, eps, eta, N, abs_tol, rel_tol, max_step, min_step,
                               safety, work)
        if not ok or not (abs(ys) < escape):
            return betas[: i + 1], gammas[: i + 1], i
        x = x + (xs - xr)
        y = ys
        betas[i + 1], gammas[i + 1] = x, y
    return betas, gammas, n_iter

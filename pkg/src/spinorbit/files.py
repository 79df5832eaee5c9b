"""Text formats: torus files and plot-ready CSV tables.

A torus file stores one invariant attractor::

    spinorbit-torus v1
    omega=...
    eps=...
    eta=...
    ecc=...
    lambda=...
    n=...
    prec_bits=...
    err_grid=...
    err_interlaced=...
    model=full
    k re(c1_k) im(c1_k) re(c2_k) im(c2_k)     (n rows)

where ``c1`` and ``c2`` are the Fourier coefficients (FFT order, signed
``k``) of the periodic parts ``K1(theta) - theta`` and ``K2(theta)``.
Numbers carry ``ceil(p log10 2) + 2`` significant digits, which is enough
to read them back bit for bit at the stored precision.
"""

from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path

import numpy as np

from . import fourier as fr
from .arith import get_context, to_float
from .fourier import LiftedCurve
from .kam import TorusSolution
from .model import ModelParams

__all__ = [
    "MAGIC",
    "TorusFormatError",
    "PrecisionDowncastWarning",
    "write_torus",
    "read_torus",
    "CONTINUATION_HEADER",
    "AVG_HEADER",
    "write_continuation_csv",
    "write_avg_csv",
    "emit_plot_data",
]

MAGIC = "spinorbit-torus v1"
HEADER_KEYS = ("omega", "eps", "eta", "ecc", "lambda", "n", "prec_bits", "err_grid",
               "err_interlaced")
CONTINUATION_HEADER = ("eps", "e", "n", "E_sup", "err_interlaced", "iters", "seconds")
AVG_HEADER = ("eps", "e_full", "e_avg", "diff", "flag")


class TorusFormatError(ValueError):
    """Malformed, truncated or wrong-version torus file."""


class PrecisionDowncastWarning(UserWarning):
    """A file is read at a lower precision than it was written with."""


def _fmt_float(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else str(x)


def write_torus(path, sol: TorusSolution):
    """Write ``sol`` in the current precision."""
    ctx = get_context()
    c1, c2 = sol.K.coeffs()
    k = fr.frequencies(sol.n)
    f = ctx.format
    lines = [
        MAGIC,
        f"omega={f(sol.omega)}",
        f"eps={f(sol.params.eps)}",
        f"eta={f(sol.params.eta)}",
        f"ecc={f(sol.ecc)}",
        f"lambda={f(sol.lam)}",
        f"n={sol.n}",
        f"prec_bits={ctx.bits}",
        f"err_grid={_fmt_float(sol.err_grid)}",
        f"err_interlaced={_fmt_float(sol.err_interlaced)}",
        f"model={sol.model}",
    ]
    for i in range(sol.n):
        a, b = c1[i], c2[i]
        lines.append(f"{k[i]} {f(a.real)} {f(a.imag)} {f(b.real)} {f(b.imag)}")
    Path(path).write_text("\n".join(lines) + "\n")


def _complex_array(ctx, re, im):
    if ctx.is_double:
        return np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)
    import gmpy2

    ctx.activate()
    return np.array([gmpy2.mpc(a, b) for a, b in zip(re, im)], dtype=object)


def read_torus(path) -> TorusSolution:
    """Read a torus file into the current precision.

    Warns with :class:`PrecisionDowncastWarning` when the file was
    written with more bits than the active context has.
    """
    ctx = get_context()
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != MAGIC:
        got = text[0].strip() if text else "<empty>"
        raise TorusFormatError(f"expected header {MAGIC!r}, found {got!r}")
    meta = {}
    i = 1
    while i < len(text) and "=" in text[i]:
        key, val = text[i].split("=", 1)
        meta[key.strip()] = val.strip()
        i += 1
    missing = [k for k in HEADER_KEYS if k not in meta]
    if missing:
        raise TorusFormatError(f"missing header keys: {', '.join(missing)}")
    n = int(meta["n"])
    fr.check_size(n)
    bits = int(meta["prec_bits"])
    if bits > ctx.bits:
        warnings.warn(f"torus stored with {bits} bits is read at {ctx.bits} bits",
                      PrecisionDowncastWarning, stacklevel=2)
    rows = [ln.split() for ln in text[i:] if ln.strip()]
    if len(rows) != n:
        raise TorusFormatError(f"expected {n} coefficient rows, found {len(rows)}")
    k_expected = fr.frequencies(n)
    cols = [[], [], [], []]
    for j, r in enumerate(rows):
        if len(r) != 5 or int(r[0]) != k_expected[j]:
            raise TorusFormatError(f"bad coefficient row {j}: {' '.join(r)}")
        for c in range(4):
            cols[c].append(ctx.parse(r[c + 1]))
    c1 = _complex_array(ctx, cols[0], cols[1])
    c2 = _complex_array(ctx, cols[2], cols[3])
    K = LiftedCurve.from_coeffs(c1, c2)
    ecc = ctx.parse(meta["ecc"])
    params = ModelParams(ctx.parse(meta["eps"]), ctx.parse(meta["eta"]), ecc,
                         ctx.parse(meta["omega"]))
    return TorusSolution(
        K=K, ecc=ecc, omega=params.omega, lam=ctx.parse(meta["lambda"]),
        err_grid=float(meta["err_grid"]), err_interlaced=float(meta["err_interlaced"]), n=n,
        params=params, model=meta.get("model", "full"),
    )


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    if isinstance(x, float):
        return _fmt_float(x)
    return get_context().format(x)


def write_continuation_csv(path, run):
    """One row per accepted solution of a :class:`ContinuationRun`."""
    rows = []
    for s in run.family:
        rows.append([_cell(s.params.eps), _cell(s.ecc), s.n, _fmt_float(s.err_grid),
                     _fmt_float(s.err_interlaced), s.iterations, _fmt_float(s.seconds)])
    _write_csv(path, CONTINUATION_HEADER, rows)


def write_avg_csv(path, rows):
    """Rows ``(eps, e_full, e_avg, diff, flag)`` of ``compare_averaged``."""
    _write_csv(path, AVG_HEADER, [[_cell(c) for c in r] for r in rows])


def emit_plot_data(path, data, kind, samples=None):
    """Write plot-ready data.

    Parameters
    ----------
    kind : {"curve", "rotation", "avgdiff"}
        * ``curve``: ``data`` is a TorusSolution; rows ``(theta, x/pi, y)``
          with ``x = 2 pi K1`` reduced to ``[0, 2 pi)`` and
          ``y = dx/dt = 2 pi K2``; ``samples`` points of the Fourier
          interpolant (default: the mesh).
        * ``rotation``: ``data`` are rows ``(e, omega_hat, quality, Nbar/Lbar)``.
        * ``avgdiff``: ``data`` are rows of ``compare_averaged``; writes
          ``(eps, diff)``.
    """
    ctx = get_context()
    if kind == "curve":
        K = data.K
        if samples is None or samples == K.n:
            th = K.theta()
            k1, k2 = K.K1(), K.K2()
        else:
            th = ctx.arange(samples) / samples
            c1, c2 = K.coeffs()
            k1 = th + fr.evaluate(c1, th)
            k2 = fr.evaluate(c2, th)
        turns = np.floor(np.asarray(to_float(k1), dtype=float))
        xpi = 2 * (k1 - ctx.array(turns))
        y = 2 * ctx.pi * k2
        rows = [[_cell(a), _cell(b), _cell(c)] for a, b, c in zip(th, xpi, y)]
        _write_csv(path, ("theta", "x_over_pi", "y"), rows)
    elif kind == "rotation":
        _write_csv(path, ("e", "omega_hat", "quality", "nbar_over_lbar"),
                   [[_cell(c) for c in r] for r in data])
    elif kind == "avgdiff":
        _write_csv(path, ("eps", "diff"),
                   [[_cell(r[0]), _cell(r[3])] for r in data if r[3] is not None])
    else:
        raise ValueError(f"unknown plot kind {kind!r}")


"""Command-line interface.

Usage: ``spinorbit [--prec BITS] [--threads W] SUBCOMMAND ...`` (the
same program is installed as ``torus``; a leading ``torus`` word is
ignored, so ``spinorbit torus compute ...`` also works).

Exit status is 0 on success, 1 on a numerical failure (a JSON record is
printed on stderr) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import files
from .arith import DomainError, get_context, set_precision
from .continuation import (compare_averaged, continue_in_eps, start_family,
                           sweep_drift_vs_frequency)
from .flow import AveragedReturnMap, FullReturnMap, IntegrationError, jet_goodness_test, map_G
from .kam import (DegeneracyError, NewtonDivergence, TorusSolution, accuracy_check,
                  default_tolerance, invariance_error)
from .model import ModelParams, a5_integral, conformal_factor, parse_frequency
from .seed import (SeedError, build_embedding, integrable_guess, rotation_number,
                   transient_orbit)

__all__ = ["main", "build_parser", "NumericalFailure"]

log = logging.getLogger("spinorbit")


class NumericalFailure(RuntimeError):
    """A computation finished without a valid result."""


def _num(text):
    return get_context().parse(str(text))


def _maps(model):
    return FullReturnMap if model == "full" else AveragedReturnMap


def _print(**kw):
    for k, v in kw.items():
        if isinstance(v, float):
            v = files._fmt_float(v)
        elif not isinstance(v, (int, str)):
            v = get_context().format(v)
        print(f"{k}={v}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_compute(args):
    omega = parse_frequency(args.omega)
    eps = _num(args.eps)
    tol = float(args.tol) if args.tol else None
    sol, rmap = start_family(omega, _num(args.eta), n=args.n, model=args.model, tol=tol,
                             workers=args.threads)
    if eps > 0:
        run = continue_in_eps(sol, rmap, eps, deps0=float(args.deps0), eps_stops=[eps], tol=tol,
                              n_max=args.n_max)
        if run.stopped != "target":
            raise NumericalFailure(f"continuation stopped at eps={run.last_good_eps:.6e}")
        sol = run.last
    files.write_torus(args.out, sol)
    if args.curve_out:
        files.emit_plot_data(args.curve_out, sol, "curve")
    _print(eps=sol.params.eps, ecc=sol.ecc, n=sol.n, err_grid=sol.err_grid,
           err_interlaced=sol.err_interlaced)


def cmd_continue(args):
    start = files.read_torus(args.src)
    tol = float(args.tol) if args.tol else None
    rmap = _maps(start.model)(start.params, None, args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stops = [_num(s) for s in (args.eps_stops or [])] + [_num(args.eps_target)]
    written = []

    def save(run, rec):
        if rec.status == "ok":
            i = len(run.family) - 1
            files.write_torus(out / f"torus_{i:04d}.txt", run.last)
            if args.curves:
                files.emit_plot_data(out / f"curve_{i:04d}.csv", run.last, "curve")
            written.append(i)
        files.write_continuation_csv(out / "continuation.csv", run)

    run = continue_in_eps(start, rmap, _num(args.eps_target), deps0=float(args.deps0),
                          eps_stops=stops, tol=tol, adapt_modes=args.adapt_modes,
                          n_max=args.n_max, callback=save)
    files.write_continuation_csv(out / "continuation.csv", run)
    _print(stopped=run.stopped, eps=run.last.params.eps, ecc=run.last.ecc, n=run.last.n,
           steps=len(run.family) - 1)
    if run.stopped != "target":
        raise NumericalFailure(f"step underflow; last good eps={run.last_good_eps:.9e}")


def cmd_seed(args):
    omega = parse_frequency(args.omega)
    eps, eta = _num(args.eps), _num(args.eta)
    e, K = integrable_guess(omega, args.n)
    if eps > 0:
        params = ModelParams(eps, eta, e)
        orbit = transient_orbit(params, args.transient, args.keep, model=args.model,
                                safety=float(args.safety))
        K = build_embedding(orbit, args.n, args.j)
        om_hat, q = rotation_number(orbit)
        log.info("seed orbit rotation number %.12f (quality %.2e)", om_hat, q)
    params = ModelParams(eps, eta, e, omega)
    rmap = _maps(args.model)(params, None, args.threads)
    _, _, err, _ = invariance_error(K, e, rmap, omega)
    sol = TorusSolution(K=K, ecc=e, omega=omega, lam=rmap.lam(e), err_grid=err,
                        err_interlaced=float("nan"), n=args.n, params=params, converged=False,
                        model=args.model)
    files.write_torus(args.out, sol)
    _print(ecc=e, n=args.n, err_grid=err)


def cmd_rotnum(args):
    params = ModelParams(_num(args.eps), _num(args.eta), _num(args.ecc))
    orbit = transient_orbit(params, args.transient, args.keep, safety=float(args.safety))
    om, q = rotation_number(orbit)
    _print(omega_hat=om, quality=q, circle_like=str(q < 1e-8).lower())


def cmd_sweep(args):
    if args.e_list:
        grid = [float(x) for x in args.e_list]
    else:
        grid = list(np.linspace(float(args.e_min), float(args.e_max), args.e_count))
    rows = sweep_drift_vs_frequency(_num(args.eta), _num(args.eps), grid, args.transient,
                                    args.keep)
    files.emit_plot_data(args.out, rows, "rotation")
    for r in rows:
        print(" ".join(files._fmt_float(v) for v in r))


def cmd_compare(args):
    omega = parse_frequency(args.omega)
    tol = float(args.tol) if args.tol else None
    rows = compare_averaged(omega, _num(args.eta), [_num(x) for x in args.eps_list], n=args.n,
                            tol=tol, workers=args.threads, n_max=args.n_max)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files.write_avg_csv(out / "avg_vs_full.csv", rows)
    files.emit_plot_data(out / "avgdiff.csv", rows, "avgdiff")
    for r in rows:
        print(" ".join(files._cell(c) for c in r))
    if any(r[4] for r in rows):
        raise NumericalFailure("a model diverged at some eps")


def cmd_conformal(args):
    ctx = get_context()
    e, eta = _num(args.ecc), _num(args.eta)
    lam = conformal_factor(e, eta)
    _print(**{"lambda": lam, "a5_integral": a5_integral(e)})
    if args.check:
        twopi = 2 * ctx.pi
        g = map_G(ctx.scalar(0.3), twopi * ctx.scalar(1.2), ModelParams(ctx.scalar(0), eta, e),
                  jets=True)
        D = g.D[:, :, 0]
        det = D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]
        _print(det_DG=det, difference=float(abs(det - lam)))


def cmd_jet_test(args):
    params = ModelParams(_num(args.eps), _num(args.eta), _num(args.ecc))
    v = None
    if args.seed is not None:
        v = list(np.random.default_rng(args.seed).standard_normal(3))
    res = jet_goodness_test(_num(args.beta0), _num(args.gamma0), params, h=float(args.h), v=v)
    _print(c_h=res.c_h, c_h2=res.c_h2, log2_ratio=res.ratio_log2)
    if res.degenerate or abs(res.ratio_log2 - 2) > 0.1:
        raise NumericalFailure(f"jet test ratio {res.ratio_log2:.3f} is not 2 +- 0.1")


def cmd_verify(args):
    sol = files.read_torus(args.torus)
    ctx = get_context()
    tol = float(args.tol) if args.tol else default_tolerance(ctx.bits)
    rmap = _maps(sol.model)(sol.params, None, args.threads)
    _, _, err, _ = invariance_error(sol.K, sol.ecc, rmap, sol.omega)
    err_int, _ = accuracy_check(sol.K, sol.ecc, rmap, sol.omega, tol)
    ok = abs(err - sol.err_grid) <= 10 * tol
    if math.isfinite(sol.err_interlaced):
        ok = ok and abs(err_int - sol.err_interlaced) <= 10 * tol
    _print(err_grid=err, err_interlaced=err_int, stored_err_grid=sol.err_grid,
           stored_err_interlaced=sol.err_interlaced, match=str(ok).lower())
    if not ok:
        raise NumericalFailure("recomputed errors differ from the stored ones by more than 10 tol")


# ---------------------------------------------------------------------------
# parser


def _default_threads():
    return int(os.environ.get("SPINORBIT_THREADS", os.cpu_count() or 1))


def build_parser():
    p = argparse.ArgumentParser(prog="spinorbit",
                                description="Invariant attractors of the dissipative spin-orbit "
                                            "problem.")
    p.add_argument("--prec", type=int, default=int(os.environ.get("SPINORBIT_PREC", 53)),
                   help="mantissa bits (53 = hardware double; default from SPINORBIT_PREC)")
    p.add_argument("--threads", type=int, default=_default_threads(), help="worker processes")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(q, omega=True):
        if omega:
            q.add_argument("--omega", required=True, help="golden, silver or a decimal number")
        q.add_argument("--eta", required=True)
        q.add_argument("--model", choices=("full", "averaged"), default="full")

    q = sub.add_parser("compute", help="attractor at one eps, continued from eps = 0")
    model_args(q)
    q.add_argument("--eps", default="0")
    q.add_argument("--n", type=int, default=64)
    q.add_argument("--n-max", type=int, default=2048)
    q.add_argument("--tol")
    q.add_argument("--deps0", default="1e-3")
    q.add_argument("--out", required=True)
    q.add_argument("--curve-out")
    q.set_defaults(func=cmd_compute)

    q = sub.add_parser("continue", help="continue a torus file in eps")
    q.add_argument("--from", dest="src", required=True)
    q.add_argument("--eps-target", required=True)
    q.add_argument("--eps-stops", nargs="*")
    q.add_argument("--adapt-modes", action=argparse.BooleanOptionalAction, default=True)
    q.add_argument("--n-max", type=int, default=2048)
    q.add_argument("--tol")
    q.add_argument("--deps0", default="1e-3")
    q.add_argument("--curves", action="store_true", help="also write curve_XXXX.csv")
    q.add_argument("--out-dir", required=True)
    q.set_defaults(func=cmd_continue)

    q = sub.add_parser("seed", help="initial approximation as a torus file")
    model_args(q)
    q.add_argument("--eps", default="0")
    q.add_argument("--n", type=int, default=128)
    q.add_argument("--j", type=int, default=4)
    q.add_argument("--transient", type=int)
    q.add_argument("--keep", type=int, default=4096)
    q.add_argument("--safety", default="5")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_seed)

    q = sub.add_parser("rotnum", help="rotation number of the attractor")
    q.add_argument("--eps", required=True)
    q.add_argument("--eta", required=True)
    q.add_argument("--ecc", required=True)
    q.add_argument("--transient", type=int)
    q.add_argument("--keep", type=int, default=4096)
    q.add_argument("--safety", default="5")
    q.set_defaults(func=cmd_rotnum)

    q = sub.add_parser("sweep-drift", help="rotation number versus eccentricity")
    q.add_argument("--eps", required=True)
    q.add_argument("--eta", required=True)
    q.add_argument("--e-list", nargs="*")
    q.add_argument("--e-min", default="0")
    q.add_argument("--e-max", default="0.5")
    q.add_argument("--e-count", type=int, default=11)
    q.add_argument("--transient", type=int)
    q.add_argument("--keep", type=int, default=4096)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_sweep)

    q = sub.add_parser("compare-averaged", help="drift of the full and averaged models")
    q.add_argument("--omega", required=True)
    q.add_argument("--eta", required=True)
    q.add_argument("--eps-list", nargs="+", required=True)
    q.add_argument("--n", type=int, default=64)
    q.add_argument("--n-max", type=int, default=1024)
    q.add_argument("--tol")
    q.add_argument("--out-dir", required=True)
    q.set_defaults(func=cmd_compare)

    q = sub.add_parser("conformal-factor", help="conformal factor of the return map")
    q.add_argument("--ecc", required=True)
    q.add_argument("--eta", required=True)
    q.add_argument("--check", action="store_true", help="compare with det DG from jets")
    q.set_defaults(func=cmd_conformal)

    q = sub.add_parser("jet-test", help="jet transport goodness test")
    q.add_argument("--eps", default="1e-4")
    q.add_argument("--eta", default="1e-3")
    q.add_argument("--ecc", default="0.25")
    q.add_argument("--beta0", default="0.5")
    q.add_argument("--gamma0", default="7")
    q.add_argument("--h", default="1e-7")
    q.add_argument("--seed", type=int, help="random direction from this RNG seed")
    q.set_defaults(func=cmd_jet_test)

    q = sub.add_parser("verify", help="recompute the errors of a torus file")
    q.add_argument("--torus", required=True)
    q.add_argument("--tol")
    q.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "torus":
        argv = argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        set_precision(args.prec)
    except ValueError as exc:
        print(f"spinorbit: error: {exc}", file=sys.stderr)
        return 2
    os.environ["SPINORBIT_THREADS"] = str(max(1, args.threads))
    try:
        args.func(args)
    except (NumericalFailure, NewtonDivergence, DegeneracyError, IntegrationError, SeedError,
            DomainError, ArithmeticError) as exc:
        print(json.dumps({"status": "failure", "command": args.command,
                          "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except (ValueError, files.TorusFormatError, OSError) as exc:
        print(f"spinorbit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

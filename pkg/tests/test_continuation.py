import math

import numpy as np
import pytest

from spinorbit import continuation as cont
from spinorbit import fourier as fr
from spinorbit.kam import accuracy_check
from spinorbit.model import ModelParams, golden_frequency, nbar_lbar, silver_frequency
from spinorbit.seed import QUALITY_THRESHOLD, drift_from_frequency, rotation_number, transient_orbit

W1, W2 = golden_frequency(), silver_frequency()


def test_averaging_transform_is_identity_without_dissipation():
    chk = cont.averaging_transform_check(ModelParams(1e-3, 0.0, 0.25))
    assert chk.max_discrepancy == 0.0 and chk.gamma_end == 1.0 and chk.abar == 0.0


def test_averaging_transform_with_dissipation():
    chk = cont.averaging_transform_check(ModelParams(1e-3, 1e-3, 0.25))
    assert chk.max_discrepancy <= 1e-9
    assert chk.gamma_start == 1.0 and abs(chk.gamma_end - 1) <= 1e-12
    assert chk.abar == pytest.approx(chk.abar_quadrature, rel=1e-12)


def test_averaging_transform_over_several_periods():
    chk = cont.averaging_transform_check(ModelParams(5e-3, 1e-2, 0.1), t_span=(0, 6 * math.pi))
    assert chk.max_discrepancy <= 1e-8


def test_start_family_averaged_is_exact():
    sol, rmap = cont.start_family(W2, 1e-3, n=32, model="averaged")
    assert sol.iterations == 0 and sol.ecc == drift_from_frequency(W2)


def _full_shift(omega, eta):
    sol, _ = cont.start_family(omega, eta, n=32)
    return sol.ecc - drift_from_frequency(omega)


def test_full_model_drift_shift_is_second_order_in_eta():
    d1, d2 = _full_shift(W2, 1e-2), _full_shift(W2, 5e-3)
    assert d1 > 0 and d2 > 0
    assert d1 / d2 == pytest.approx(4, rel=0.02)
    assert d2 / 25e-6 == pytest.approx(0.2364, rel=0.02)


def test_continuation_reaches_target_on_stops():
    sol, rmap = cont.start_family(W2, 1e-3, n=64, model="averaged")
    run = cont.continue_in_eps(sol, rmap, 3e-3, eps_stops=[1.5e-3], tol=1e-12)
    assert run.stopped == "target"
    eps = [float(s.params.eps) for s in run.family]
    assert eps == pytest.approx([0, 1e-3, 1.5e-3, 2.5e-3, 3e-3], abs=1e-15)
    assert run.last_good_eps == 3e-3
    # the silver family loses eccentricity as the triaxiality grows
    ecc = [s.ecc for s in run.family]
    assert all(b < a for a, b in zip(ecc, ecc[1:]))
    assert all(r.status == "ok" for r in run.schedule)
    assert all(s.err_interlaced < 10 * 1e-12 for s in run.family[1:])


def test_continuation_is_path_independent():
    sol, rmap = cont.start_family(W2, 1e-3, n=64, model="averaged")
    a = cont.continue_in_eps(sol, rmap, 2e-3, deps0=1e-3, tol=1e-12).last
    b = cont.continue_in_eps(sol, rmap, 2e-3, deps0=4e-4, tol=1e-12).last
    assert abs(a.ecc - b.ecc) < 1e-11
    assert np.max(np.abs(a.K.p2 - b.K.p2)) < 1e-10


def test_continuation_halves_and_underflows():
    sol, rmap = cont.start_family(W2, 1e-3, n=16, model="averaged")
    seen = []
    run = cont.continue_in_eps(sol, rmap, 0.5, deps0=0.2, max_halvings=2, tol=1e-13,
                               adapt_modes=False, callback=lambda r, rec: seen.append(rec))
    assert run.stopped == "underflow"
    assert run.halvings >= 3 and len(seen) == len(run.schedule)
    assert any(r.status != "ok" for r in run.schedule)
    assert run.deps < 0.2 / 4


def test_mode_doubling_when_unresolved():
    sol, rmap = cont.start_family(W1, 1e-3, n=16, model="averaged")
    run = cont.continue_in_eps(sol, rmap, 4e-3, deps0=2e-3, tol=1e-12, n_max=256)
    assert run.stopped == "target"
    assert run.modes[-1] > 16 and run.modes == sorted(run.modes)


def test_sweep_at_zero_eps_matches_drift_ratio():
    rows = cont.sweep_drift_vs_frequency(1e-3, 0.0, [0.1, 0.25])
    for e, om, q, ratio in rows:
        nb, lb = nbar_lbar(e)
        assert ratio == pytest.approx(float(nb / lb), rel=1e-15)
        assert q < 1e-12
        assert abs(om - ratio) < 1e-6  # the full model sits O(eta^2) away


def test_sweep_flags_non_circle_attractor():
    # strong triaxiality: the short orbit is far from a smooth circle
    rows = cont.sweep_drift_vs_frequency(1e-3, 0.5, [0.3], n_transient=200, n_keep=1024)
    assert rows[0][2] > QUALITY_THRESHOLD


def test_full_attractor_rotation_number():
    sol, _ = cont.start_family(W2, 1e-3, n=32)
    orbit = transient_orbit(ModelParams(0.0, 1e-3, sol.ecc), n_keep=4096)
    om, q = rotation_number(orbit)
    assert abs(om - float(W2)) < 1e-10 and q < 1e-10


def test_compare_averaged_small_eps():
    rows = cont.compare_averaged(W2, 1e-3, [1e-3, 2e-3], n=64, tol=1e-12)
    assert [r[4] for r in rows] == ["", ""]
    for eps, ef, ea, d, _ in rows:
        assert d == ef - ea and d > 0
        assert d / 1e-6 == pytest.approx(0.2364, rel=0.05)


def test_tail_and_interlaced_checks_agree():
    sol, rmap = cont.start_family(W1, 1e-3, n=32, model="averaged")
    run = cont.continue_in_eps(sol, rmap, 6e-3, tol=1e-12, n_max=512)
    votes = []
    for s in run.family[1:]:
        c1, c2 = s.K.coeffs()
        tail = max(fr.tail_norm(c1), fr.tail_norm(c2))
        votes.append((tail < 10 * s.tol) == (s.err_interlaced < 10 * s.tol))
        # coarser mesh of the same solution, to exercise the failing side
        coarse = s.K.resampled(s.n // 4)
        k1, k2 = coarse.coeffs()
        err_c, _ = accuracy_check(coarse, s.ecc, cont._map_at(rmap, s.params.eps), W1, s.tol)
        votes.append((max(fr.tail_norm(k1), fr.tail_norm(k2)) < 10 * s.tol)
                     == (err_c < 10 * s.tol))
    assert sum(votes) >= 0.95 * len(votes)


def test_stop_reached_by_rounding_needs_no_extra_step():
    # 7.53113e-3 + 2e-3 in steps of 1e-3 falls one ulp short of 9.53113e-3
    sol, rmap = cont.start_family(W2, 1e-3, n=64, model="averaged")
    run = cont.continue_in_eps(sol, rmap, 1.053113e-2, eps_stops=[7.53113e-3, 9.53113e-3],
                               tol=1e-12, n_max=256)
    eps = [float(s.params.eps) for s in run.family]
    assert 9.53113e-3 in eps and run.stopped == "target"
    assert min(np.diff(eps)) > 1e-5


def test_stall_on_coarse_mesh_doubles_modes():
    # Newton stalls at the truncation error of n = 16 and 32; each stall
    # restarts from the best iterate on the doubled mesh
    w = silver_frequency()
    sol, rmap = cont.start_family(w, 1e-3, n=64, model="averaged")
    base = cont.continue_in_eps(sol, rmap, 2e-3, tol=1e-13).last
    rm = cont._map_at(rmap, 2e-3)
    with pytest.raises(cont.NewtonDivergence):
        cont.newton_solve(base.K.resampled(16), base.ecc, rm, w, tol=1e-12)
    s, ok = cont.solve_at(base.K.resampled(8), base.ecc, rm, w, tol=1e-12, n_max=64)
    assert ok and s.n == 64
    assert abs(s.ecc - base.ecc) < 1e-10
    with pytest.raises(cont.NewtonDivergence):
        cont.solve_at(base.K.resampled(8), base.ecc, rm, w, tol=1e-12, n_max=16)

"""Reproduce the eccentricities labelled on the continuation figures.

Continues the golden and silver attractors in eps for eta = 1e-6 and
eta = 1e-3 at double precision, landing exactly on every labelled eps,
and prints the computed drift next to the label.

    python demos/figure_labels.py
"""

import time

from spinorbit.continuation import continue_in_eps, start_family
from spinorbit.model import golden_frequency, silver_frequency

LABELS = {
    (1e-6, "silver"): [(7.53113e-3, 0.249466), (9.53113e-3, 0.249043),
                       (1.15311e-2, 0.248553), (1.22588e-2, 0.248363)],
    (1e-6, "golden"): [(4.93173e-3, 0.315391), (6.90324e-3, 0.315698),
                       (8.90324e-3, 0.316098), (1.09032e-2, 0.316569)],
    (1e-3, "silver"): [(5.87347e-3, 0.249751), (7.87347e-3, 0.249400),
                       (9.75827e-3, 0.248991), (1.17583e-2, 0.248494)],
    (1e-3, "golden"): [(5.81238e-3, 0.315517), (7.81238e-3, 0.315870),
                       (9.81238e-3, 0.316305), (1.15481e-2, 0.316731)],
}
OMEGA = {"golden": golden_frequency(), "silver": silver_frequency()}


def main():
    print(f"{'eta':>6} {'omega':>6} {'eps':>11} {'label':>9} {'computed':>11} {'diff':>9}")
    worst = 0.0
    for (eta, name), labels in LABELS.items():
        t0 = time.perf_counter()
        sol, rmap = start_family(OMEGA[name], eta, n=64)
        stops = [eps for eps, _ in labels]
        run = continue_in_eps(sol, rmap, stops[-1], eps_stops=stops)
        got = {float(s.params.eps): s.ecc for s in run.family}
        for eps, label in labels:
            e = got.get(eps)
            if e is None:
                print(f"{eta:6.0e} {name:>6} {eps:11.5e} {label:9.6f} {'not reached':>11}")
                continue
            worst = max(worst, abs(e - label))
            print(f"{eta:6.0e} {name:>6} {eps:11.5e} {label:9.6f} {e:11.8f} {e - label:9.1e}")
        print(f"  ({len(run.family) - 1} steps, n up to {max(run.modes)}, "
              f"{time.perf_counter() - t0:.1f} s)")
    print(f"largest deviation from a label: {worst:.1e}")


if __name__ == "__main__":
    main()

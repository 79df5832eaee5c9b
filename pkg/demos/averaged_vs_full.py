"""Drift of the full model minus that of the averaged model.

The averaged equation replaces the tidal coefficients by their orbital
means, so the two drifts differ by a quantity that scales like eta**2.
This prints the difference for a few eta at fixed eps and the ratio to
eta**2, which settles near 0.437 (golden) and 0.236 (silver).

    python demos/averaged_vs_full.py
"""

from spinorbit.continuation import compare_averaged
from spinorbit.model import golden_frequency, silver_frequency

EPS = [2e-3, 6e-3, 1e-2]


def main():
    for name, w in (("golden", golden_frequency()), ("silver", silver_frequency())):
        print(name)
        print(f"  {'eta':>7} {'eps':>7} {'e_full':>12} {'diff':>11} {'diff/eta^2':>10}")
        for eta in (4e-3, 2e-3, 1e-3):
            for eps, ef, ea, d, flag in compare_averaged(w, eta, EPS):
                if flag:
                    print(f"  {eta:7.0e} {eps:7.0e} {flag}")
                    continue
                print(f"  {eta:7.0e} {eps:7.0e} {ef:12.9f} {d:11.4e} {d / eta**2:10.4f}")


if __name__ == "__main__":
    main()

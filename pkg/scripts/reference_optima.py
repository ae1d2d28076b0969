"""Optimized transmission coefficients on the band recovered from the reference optima.

Prints our CMA-ES optimum next to the tabulated coefficients for each of
the four transmission variants, and the tabulated coefficients' own rho_max
evaluated on the same band.

    python3 scripts/reference_optima.py --seeds 0 1 2
"""
import argparse

from schwarzgrav.cli import optimize_transmission
from schwarzgrav.rate import MODES, REFERENCE_OPTIMA, rho_max, reference_band, reference_params


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--samples", type=int, default=10_000)
    args = ap.parse_args()
    band = reference_band(args.samples)
    print(f"recovered band [{band.k_min:.6f}, {band.k_max:.6f}]")
    print(f"{'mode':10s} {'seed':>4s} {'p1':>9s} {'q1':>9s} {'p2':>9s} {'q2':>9s} {'rho_max':>8s}"
          f" {'ref':>7s} {'ref@band':>10s}")
    for mode in MODES:
        tabulated = rho_max(reference_params(mode), band)[0]
        for seed in args.seeds:
            r = optimize_transmission(mode, band, seed)
            p1, q1, p2, q2 = r.params.as_row()
            print(f"{mode:10s} {seed:4d} {p1:9.4f} {q1:9.4f} {p2:9.4f} {q2:9.4f} {r.rho_max:8.4f}"
                  f" {REFERENCE_OPTIMA[mode][4]:7.4f} {tabulated:10.4f}")


if __name__ == "__main__":
    main()

"""Outer iteration counts against the number of x slabs, per transmission variant.

Report only: the desk-scale analogue of the iteration columns of the
large-scale runs.  Uses the crater problem on the configured grid.

    python3 scripts/subdomain_sweep.py --n 64 --counts 2 4 8 16
"""
import argparse
import time

from schwarzgrav.cli import optimize_transmission
from schwarzgrav.model import assemble_poisson, make_grid, synthetic_crater_anomaly
from schwarzgrav.rate import MODES, TransmissionParams, default_band
from schwarzgrav.schwarz import SchwarzDivergence, partition_x, schwarz_solve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64, help="cells per horizontal axis")
    ap.add_argument("--nz", type=int, default=1)
    ap.add_argument("--length", type=float, default=250e3, help="horizontal extent in meters")
    ap.add_argument("--counts", type=int, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--untuned", action="store_true", help="also run the p=1, q=0 Robin condition")
    args = ap.parse_args()

    L = args.length
    grid = make_grid(args.n, args.n, args.nz, L, L, 0.06 * L)
    field = synthetic_crater_anomaly(grid, (L / 2, L / 2), 0.2 * L, 300.0, depth=0.02 * L if args.nz > 1 else None)
    system = assemble_poisson(field)
    band = default_band(grid)
    variants = {m: optimize_transmission(m, band).params for m in MODES}
    if args.untuned:
        variants["untuned"] = TransmissionParams.robin(1.0)
    print("band", band, "grid", grid.counts)
    print("variant    " + " ".join(f"{n:>6d}" for n in args.counts))
    for name, tp in variants.items():
        cells = []
        for n in args.counts:
            t0 = time.perf_counter()
            try:
                _, rep = schwarz_solve(field, partition_x(grid, n), tp, system=system)
                cells.append(f"{rep.outer_iterations:6d}" if rep.converged else f"{'nc':>6s}")
            except SchwarzDivergence:
                cells.append(f"{'div':>6s}")
            print(f"  {name} n={n}: {time.perf_counter() - t0:.2f}s", flush=True)
        print(f"{name:10s} " + " ".join(cells), flush=True)


if __name__ == "__main__":
    main()

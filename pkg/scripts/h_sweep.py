"""Refinement study: errors and fitted rates for all spaces and degrees.

Writes one CSV of result rows and one of rates per (space, p) into the output
directory, plus an optional log-log SVG per space.

    python scripts/h_sweep.py --out results/h --levels 3-6 --degrees 2,3,4
"""
import argparse
from pathlib import Path

from tricomi_dg.cli import parse_int_list
from tricomi_dg.experiments import RunConfig, h_sweep, plot_loglog, write_csv, write_rates_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/h_sweep")
    ap.add_argument("--levels", type=parse_int_list, default=[3, 4, 5, 6])
    ap.add_argument("--degrees", type=parse_int_list, default=[2, 3, 4])
    ap.add_argument("--spaces", default="standard,qt,et")
    ap.add_argument("--plot", action="store_true", help="write log-log SVGs (needs matplotlib)")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'space':8s} {'p':>2s} {'energy':>8s} {'l2':>8s}")
    for space in args.spaces.split(","):
        sweeps = {}
        for p in args.degrees:
            sw = h_sweep(RunConfig(space=space, p=p), args.levels)
            sweeps[f"p={p}"] = sw
            write_csv(sw.rows, out / f"{space}_p{p}.csv")
            write_rates_csv(sw, out / f"{space}_p{p}.rates.csv")
            print(f"{space:8s} {p:2d} {sw.rates.get('energy', float('nan')):8.3f} "
                  f"{sw.rates.get('l2', float('nan')):8.3f}" + (f"  ({sw.error})" if sw.error else ""))
        if args.plot:
            for q in ("energy", "l2"):
                plot_loglog(sweeps, out / f"{space}_{q}.svg", q)


if __name__ == "__main__":
    main()

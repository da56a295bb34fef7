"""Degree study on a fixed mesh: dof counts and errors for p = 2..8.

    python scripts/p_sweep.py --level 3 --out results/p_sweep.csv
"""
import argparse

from tricomi_dg.cli import parse_int_list
from tricomi_dg.experiments import RunConfig, p_sweep, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--level", type=int, default=3, help="level 3 has h close to 0.2")
    ap.add_argument("--degrees", type=parse_int_list, default=list(range(2, 9)))
    ap.add_argument("--spaces", default="standard,qt,et")
    ap.add_argument("--out", default="results/p_sweep.csv")
    args = ap.parse_args()
    rows = []
    for space in args.spaces.split(","):
        sw = p_sweep(RunConfig(space=space, level=args.level), args.degrees)
        rows += sw.rows
        if sw.error:
            print(f"{space}: {sw.error}")
        for r in sw.rows:
            print(f"{space:8s} p={r.config.p} dofs={r.n_dofs:7d} energy={r.energy:.3e} l2={r.l2:.3e}")
    write_csv(rows, args.out)


if __name__ == "__main__":
    main()

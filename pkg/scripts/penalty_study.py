"""L2 error over the 30 x 30 (gamma1, gamma2 = gamma3) grid.

Uses the refinement level whose mesh size is closest to 0.1 unless
``--level`` is given; writes the grid as CSV and an optional heat map.

    python scripts/penalty_study.py --space qt --p 2 --out results/penalty_qt_p2.csv
"""
import argparse

import numpy as np

from tricomi_dg.experiments import RunConfig, closest_level, penalty_sweep, write_penalty_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--space", default="qt", choices=["standard", "qt", "et"])
    ap.add_argument("--p", type=int, default=2)
    ap.add_argument("--level", type=int, default=None)
    ap.add_argument("--out", default="results/penalty.csv")
    ap.add_argument("--plot", default=None, help="SVG heat map path (needs matplotlib)")
    args = ap.parse_args()
    level = closest_level(0.1) if args.level is None else args.level
    sw = penalty_sweep(RunConfig(space=args.space, p=args.p, level=level))
    write_penalty_csv(sw, args.out)
    d, E, g = sw.default_error, sw.errors, sw.gammas
    big = (g[:, None] >= 10) | (g[None, :] >= 10)
    print(f"level {level}, default L2 error {d:.4e}")
    print(f"both penalties 1e-5: {E[0, 0] / d:.1f} x default")
    print(f"max over cells with a penalty >= 10: {np.max(E[big]) / d:.1f} x default, "
          f"{int(np.sum(E[big] > 10 * d))} cells above 10x")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        lg = np.log10(g)
        im = ax.pcolormesh(lg, lg, np.log10(E), shading="nearest")
        ax.set_xlabel("log10 gamma2 = gamma3")
        ax.set_ylabel("log10 gamma1")
        fig.colorbar(im, label="log10 L2 error")
        fig.tight_layout()
        fig.savefig(args.plot)


if __name__ == "__main__":
    main()

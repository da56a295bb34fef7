"""Command line interface.

Settings come from defaults, then an optional flat ``key = value`` config file
(``--config``), then command line flags; later sources win.
"""
from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .mesh import FacetClass, quality, quasi_uniformity
from .morawetz import beta, constants, validate

EXIT_STAGE = 1
EXIT_USAGE = 2

_KEYS = {f.name for f in fields(ex.RunConfig)} | {"levels", "p_range", "grid_n", "samples", "plot"}


def _parse_multiplier(text):
    parts = [s for s in str(text).replace(" ", "").split(",") if s]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated numbers b0,b1,c0,c1")
    return tuple(float(s) for s in parts)


def parse_int_list(text):
    """``"3,4,5"`` or ``"3-6"``."""
    text = str(text).replace(" ", "")
    if "-" in text and "," not in text:
        a, b = text.split("-")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",") if s]


_CONVERT = {"space": str, "p": int, "gamma1": float, "gamma2": float, "gamma3": float,
            "gamma4": float, "multiplier": _parse_multiplier, "d": float, "level": int,
            "mesh": str, "quad_order": int, "out": str, "levels": parse_int_list,
            "p_range": parse_int_list, "grid_n": int, "samples": str, "plot": str}


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string("[run]\n" + text)
    out = {}
    for k, v in cp["run"].items():
        key = k.replace("-", "_")
        if key not in _KEYS:
            raise ValueError(f"unknown config key {k!r}")
        out[key] = _CONVERT[key](v)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--space", choices=["standard", "qt", "et"], default=S)
    common.add_argument("--p", type=int, default=S, help="polynomial degree (>= 2)")
    where = common.add_mutually_exclusive_group()
    where.add_argument("--level", type=int, default=S, help="refinement level of the built-in mesh")
    where.add_argument("--mesh", default=S, help="mesh file in tricomi-mesh v1 format")
    for k in (1, 2, 3, 4):
        common.add_argument(f"--gamma{k}", type=float, default=S)
    common.add_argument("--d", type=float, default=S, help="roof height")
    common.add_argument("--multiplier", type=_parse_multiplier, default=S, metavar="b0,b1,c0,c1")
    common.add_argument("--quad-order", dest="quad_order", type=int, default=S)
    common.add_argument("--out", default=S, help="output CSV path (default: stdout)")

    p = argparse.ArgumentParser(prog="tricomi-dg", description="Morawetz DG solver for the Tricomi problem")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="single solve with error report")
    s.add_argument("--samples", default=S, help="write a point-sample grid of u_h to this CSV")
    h = sub.add_parser("h-sweep", parents=[common], help="refinement study with fitted rates")
    h.add_argument("--levels", type=parse_int_list, default=S, help="e.g. 2-5 or 3,4,5")
    h.add_argument("--plot", default=S, help="optional SVG log-log plot")
    q = sub.add_parser("p-sweep", parents=[common], help="degree study on a fixed mesh")
    q.add_argument("--p-range", dest="p_range", type=parse_int_list, default=S, help="e.g. 2-8")
    g = sub.add_parser("penalty-sweep", parents=[common], help="L2 error over the penalty grid")
    g.add_argument("--grid-n", dest="grid_n", type=int, default=S, help="grid nodes per axis (default 30)")
    sub.add_parser("mesh-info", parents=[common], help="mesh statistics and stability constants")
    return p


def resolve(args: argparse.Namespace) -> tuple[ex.RunConfig, dict]:
    """Merge defaults, config file and flags."""
    settings = {}
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "command")}
    if "mesh" in flags:
        settings.pop("level", None)
    if "level" in flags:
        settings.pop("mesh", None)
    settings.update(flags)
    run_keys = {f.name for f in fields(ex.RunConfig)}
    cfg = ex.RunConfig(**{k: v for k, v in settings.items() if k in run_keys})
    if "mesh" in settings and "level" not in settings:
        cfg = replace(cfg, level=None)
    extra = {k: v for k, v in settings.items() if k not in run_keys}
    return cfg, extra


def _emit(text, path):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(cfg, extra):
    res = ex.run_solve(cfg)
    _emit(ex.write_csv([res]), cfg.out)
    if extra.get("samples"):
        pts = ex.sample_solution(res.solution)
        np.savetxt(extra["samples"], pts, delimiter=",", header="x,y,u_h", comments="")
    return 0


def cmd_h_sweep(cfg, extra):
    levels = extra.get("levels", [2, 3, 4, 5])
    sw = ex.h_sweep(cfg, levels)
    _emit(ex.write_csv(sw.rows), cfg.out)
    rates = ex.write_rates_csv(sw, Path(cfg.out).with_suffix(".rates.csv") if cfg.out else None)
    if not cfg.out:
        sys.stdout.write(rates)
    else:
        for q in ("energy", "l2"):
            if q in sw.rates:
                print(f"fitted {q} rate: {sw.rates[q]:.3f}", file=sys.stderr)
    if extra.get("plot") and len(sw.rows) >= 2:
        ex.plot_loglog({f"{cfg.space} p={cfg.p}": sw}, extra["plot"])
    if sw.error:
        raise ex.StageError("h-sweep", sw.error)
    return 0


def cmd_p_sweep(cfg, extra):
    sw = ex.p_sweep(cfg, extra.get("p_range", list(range(2, 9))))
    _emit(ex.write_csv(sw.rows), cfg.out)
    if sw.error:
        print(f"tricomi-dg: warning: {sw.error}", file=sys.stderr)
    return 0


def cmd_penalty_sweep(cfg, extra):
    n = extra.get("grid_n", 30)
    sw = ex.penalty_sweep(cfg, 10.0 ** np.linspace(-5, 5, n))
    _emit(ex.write_penalty_csv(sw), cfg.out)
    print(f"default-penalty L2 error: {sw.default_error:.6e}", file=sys.stderr)
    return 0


def cmd_mesh_info(cfg, extra):
    cfg.validate()
    mesh = ex.make_mesh(cfg)
    q = quality(mesh)
    m = cfg.morawetz
    v = validate(m, cfg.spec)
    lines = [
        f"vertices: {len(mesh.vertices)}",
        f"elements: {mesh.n_elements}",
        f"facets: {mesh.n_facets}",
    ]
    for cls in FacetClass:
        lines.append(f"facets_{cls.name.lower()}: {len(mesh.facets_of_class(cls))}")
    lines += [
        f"h_max: {mesh.h!r}",
        f"h_min: {float(mesh.h_T.min())!r}",
        f"r_star: {q.r_star!r}",
        f"C_g: {q.C_g!r}",
        f"C_tr: {q.C_tr!r}",
        f"quasi_uniformity: {quasi_uniformity(mesh)!r}",
        f"multiplier_ok: {v.ok}",
        f"delta: {v.delta!r}",
        f"beta: {beta(m, cfg.spec)!r}",
    ]
    if v.ok:
        c = constants(m, cfg.spec, q, cfg.gamma2)
        lines += [f"gamma_star: {c.gamma_star!r}", f"M_cont: {c.M_cont!r}"]
    else:
        lines += [f"violated: {s}" for s in v.violated]
    _emit("\n".join(lines) + "\n", cfg.out)
    return 0


COMMANDS = {"solve": cmd_solve, "h-sweep": cmd_h_sweep, "p-sweep": cmd_p_sweep,
            "penalty-sweep": cmd_penalty_sweep, "mesh-info": cmd_mesh_info}


def _join_negative_values(argv):
    """``--multiplier -2,...`` would be read as a flag; glue the value on."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a == "--multiplier" and i + 1 < len(argv):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg, extra = resolve(args)
        if args.command == "penalty-sweep" and "level" not in vars(args) and cfg.mesh is None \
                and "level" not in (read_config(args.config) if args.config else {}):
            cfg = replace(cfg, level=ex.closest_level(0.1, cfg.spec))
        cfg.validate()
    except (ValueError, TypeError, OSError) as exc:
        print(f"tricomi-dg: error [config] {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, extra)
    except ex.StageError as exc:
        print(f"tricomi-dg: error {exc}", file=sys.stderr)
        return EXIT_STAGE
    except OSError as exc:
        print(f"tricomi-dg: error [output] {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:
        print(f"tricomi-dg: error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())

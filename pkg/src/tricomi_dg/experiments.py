"""Experiment driver: single solves, h- and p-sweeps, penalty grids and rate fits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import PenaltyConfig, SolverError, _finish, assemble_parts, solve
from .geometry import DomainSpec
from .mesh import build_mesh, load_mesh
from .morawetz import Morawetz, validate
from .norms import error_report, l2_error
from .problems import ManufacturedSolution
from .spaces import DiscreteSpace, SpaceConfig, SpaceKind

CSV_COLUMNS = ["space", "p", "level", "h_max", "n_dofs", "energy", "residual", "l2",
               "l2_elliptic", "l2_hyperbolic", "solver_residual"]
PENALTY_GRID = 10.0 ** np.linspace(-5, 5, 30)


class StageError(RuntimeError):
    """Error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    space: str = "standard"
    p: int = 2
    gamma1: float = 10.0
    gamma2: float = 0.1
    gamma3: float = 0.1
    gamma4: float = 0.0
    multiplier: tuple = (-2.0, 0.5, 1.0, 0.25)
    d: float = 0.5
    level: int | None = 3
    mesh: str | None = None
    quad_order: int | None = None
    out: str | None = None

    def validate(self) -> "RunConfig":
        SpaceKind.parse(self.space)
        SpaceConfig(self.space, self.p)
        self.penalties
        DomainSpec(self.d)
        if self.mesh is None and (self.level is None or self.level < 0):
            raise ValueError("either a mesh path or a refinement level >= 0 is required")
        if self.quad_order is not None and self.quad_order < 2 * self.p + 1:
            raise ValueError(f"quadrature order must be at least 2p+1 = {2 * self.p + 1}")
        if len(self.multiplier) != 4:
            raise ValueError("multiplier needs four coefficients b0,b1,c0,c1")
        return self

    @property
    def penalties(self) -> PenaltyConfig:
        return PenaltyConfig(self.gamma1, self.gamma2, self.gamma3, self.gamma4)

    @property
    def morawetz(self) -> Morawetz:
        return Morawetz(*map(float, self.multiplier))

    @property
    def spec(self) -> DomainSpec:
        return DomainSpec(self.d)


@dataclass
class RunResult:
    config: RunConfig
    h_max: float
    n_dofs: int
    energy: float
    residual: float
    l2: float
    l2_elliptic: float
    l2_hyperbolic: float
    solver_residual: float
    solution: object = field(default=None, repr=False)

    def row(self) -> dict:
        c = self.config
        return {"space": SpaceKind.parse(c.space).value, "p": c.p,
                "level": "" if c.mesh else c.level, "h_max": self.h_max, "n_dofs": self.n_dofs,
                "energy": self.energy, "residual": self.residual, "l2": self.l2,
                "l2_elliptic": self.l2_elliptic, "l2_hyperbolic": self.l2_hyperbolic,
                "solver_residual": self.solver_residual}


def _stage(stage, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # tag and re-raise
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc


def make_mesh(cfg: RunConfig):
    if cfg.mesh:
        return load_mesh(cfg.mesh, cfg.spec)
    return build_mesh(cfg.spec, cfg.level)


def run_solve(cfg: RunConfig, problem=None, mesh=None) -> RunResult:
    """Assemble, solve and measure all errors against the manufactured solution."""
    _stage("config", cfg.validate)
    problem = problem or ManufacturedSolution()
    m = cfg.morawetz
    v = validate(m, cfg.spec)
    if not v.ok:
        raise StageError("config", "inadmissible multiplier: " + "; ".join(v.violated))
    mesh = mesh if mesh is not None else _stage("mesh", make_mesh, cfg)
    space = _stage("space", DiscreteSpace, mesh, SpaceConfig(cfg.space, cfg.p), problem, cfg.quad_order)
    system = _stage("assembly", _assemble, space, m, problem, cfg)
    sol = _stage("solve", solve, system)
    rep = _stage("norms", error_report, sol, problem, m, cfg.penalties, cfg.quad_order)
    return RunResult(cfg, float(mesh.h), space.n_dofs, rep.energy, rep.residual_norm,
                     rep.l2_total, rep.l2_elliptic, rep.l2_hyperbolic, sol.solver_residual, sol)


def _assemble(space, m, problem, cfg):
    pen = cfg.penalties
    parts = assemble_parts(space, m, problem, cfg.quad_order, least_squares=pen.gamma4 > 0)
    return _finish(parts, space, m, pen, problem)


# ----------------------------------------------------------------------
def fit_rate(h_list, e_list) -> float:
    """Least-squares slope of ``log e`` against ``log h``."""
    h = np.asarray(h_list, float)
    e = np.asarray(e_list, float)
    if len(h) != len(e) or len(h) < 2:
        raise ValueError("need at least two (h, error) pairs")
    if np.any(h <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors and mesh sizes must be positive and finite")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def step_rates(h_list, e_list) -> list:
    h, e = np.asarray(h_list, float), np.asarray(e_list, float)
    return [float(np.log(e[i - 1] / e[i]) / np.log(h[i - 1] / h[i])) for i in range(1, len(h))]


@dataclass
class SweepResult:
    rows: list
    rates: dict  # quantity -> fitted slope
    steps: dict  # quantity -> per-step slopes
    error: str | None = None


def h_sweep(cfg: RunConfig, levels, problem=None) -> SweepResult:
    levels = list(levels)
    if len(levels) < 3:
        raise StageError("config", "an h-sweep needs at least three levels")
    rows, err = [], None
    for lev in levels:
        try:
            rows.append(run_solve(replace(cfg, level=int(lev), mesh=None), problem))
        except StageError as exc:
            err = f"level {lev}: {exc}"
            break
    rates, steps = {}, {}
    if len(rows) >= 2:
        hs = [r.h_max for r in rows]
        for q in ("energy", "l2", "l2_elliptic", "l2_hyperbolic", "residual"):
            es = [getattr(r, q) for r in rows]
            try:
                rates[q] = fit_rate(hs, es)
                steps[q] = step_rates(hs, es)
            except ValueError:
                rates[q] = math.nan
    return SweepResult(rows, rates, steps, err)


def p_sweep(cfg: RunConfig, p_values, problem=None) -> SweepResult:
    p_values = [int(p) for p in p_values]
    if not p_values or min(p_values) < 2 or max(p_values) > 8:
        raise StageError("config", "p-sweep degrees must lie in [2, 8]")
    rows, err = [], []
    mesh = _stage("mesh", make_mesh, cfg)
    for p in p_values:
        c = replace(cfg, p=p)
        try:
            rows.append(run_solve(c, problem, mesh))
        except StageError as exc:
            # keep the row so the table stays aligned; errors are reported as inf
            err.append(f"p={p}: {exc}")
            inf = math.inf
            rows.append(RunResult(c, float(mesh.h), SpaceConfig(c.space, c.p).local_dim() * mesh.n_elements,
                                  inf, inf, inf, inf, inf, inf))
    return SweepResult(rows, {}, {}, "; ".join(err) or None)


def closest_level(target_h: float, spec: DomainSpec | None = None, max_level: int = 7) -> int:
    """Refinement level whose maximal element diameter is closest to ``target_h``."""
    spec = spec or DomainSpec()
    m = build_mesh(spec, 0)
    best, lev = abs(m.h - target_h), 0
    from .mesh import refine
    for k in range(1, max_level + 1):
        m = refine(m)
        if abs(m.h - target_h) < best:
            best, lev = abs(m.h - target_h), k
        elif m.h < target_h:
            break
    return lev


@dataclass
class PenaltySweep:
    gammas: np.ndarray
    errors: np.ndarray  # (n, n): rows gamma1, columns gamma2 = gamma3
    default_error: float
    config: RunConfig


def penalty_sweep(cfg: RunConfig, gammas=PENALTY_GRID, problem=None) -> PenaltySweep:
    """L2 errors over the (gamma1, gamma2 = gamma3) grid; failed cells hold ``inf``.

    The system is assembled once with unit penalties and recombined per cell.
    """
    _stage("config", cfg.validate)
    if cfg.p not in (2, 3, 4):
        raise StageError("config", "penalty sweeps are defined for p in {2, 3, 4}")
    problem = problem or ManufacturedSolution()
    m = cfg.morawetz
    mesh = _stage("mesh", make_mesh, cfg)
    space = _stage("space", DiscreteSpace, mesh, SpaceConfig(cfg.space, cfg.p), problem, cfg.quad_order)
    parts = _stage("assembly", assemble_parts, space, m, problem, cfg.quad_order,
                   least_squares=cfg.gamma4 > 0)

    def cell(g1, g2):
        pen = PenaltyConfig(g1, g2, g2, cfg.gamma4)
        try:
            sol = solve(_finish(parts, space, m, pen, problem))
            e = l2_error(sol, problem, order=cfg.quad_order)
            return e if np.isfinite(e) else math.inf
        except (SolverError, FloatingPointError, ValueError):
            return math.inf

    gammas = np.asarray(gammas, float)
    E = np.array([[cell(g1, g2) for g2 in gammas] for g1 in gammas])
    return PenaltySweep(gammas, E, cell(cfg.gamma1, cfg.gamma2), cfg)


# ----------------------------------------------------------------------
def write_csv(rows, path=None) -> str:
    """Write result rows with the canonical columns; returns the CSV text."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in (r.row() if hasattr(r, "row") else r).items()})
    text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    return text


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ("inf" if v > 0 else "nan")
    return v


def write_rates_csv(sweep: SweepResult, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "kind", "from_level", "to_level", "rate"])
    levels = [r.config.level for r in sweep.rows]
    for q, steps in sweep.steps.items():
        for i, s in enumerate(steps):
            w.writerow([q, "step", levels[i], levels[i + 1], repr(s)])
        w.writerow([q, "fit", levels[0], levels[-1], repr(sweep.rates[q])])
    text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    return text


def write_penalty_csv(sweep: PenaltySweep, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gamma1", "gamma2_gamma3", "l2"])
    for i, g1 in enumerate(sweep.gammas):
        for j, g2 in enumerate(sweep.gammas):
            w.writerow([repr(float(g1)), repr(float(g2)), _fmt(float(sweep.errors[i, j]))])
    text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    return text


def sample_solution(sol, n: int = 41, spec: DomainSpec | None = None):
    """Values of ``u_h`` on a regular grid clipped to the domain: rows ``(x, y, u_h)``."""
    from .geometry import contains

    spec = spec or sol.mesh.spec
    xs = np.linspace(-1, 1, n)
    ys = np.linspace(spec.y_c, spec.d, n)
    pts = np.array([(x, y) for y in ys for x in xs if contains((x, y), spec)])
    if len(pts) == 0:
        return np.zeros((0, 3))
    return np.column_stack([pts, sol(pts)])


def plot_loglog(sweeps: dict, path, quantity: str = "energy") -> None:
    """Static log-log chart of a sweep (requires matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for label, sw in sweeps.items():
        h = [r.h_max for r in sw.rows]
        e = [getattr(r, quantity) for r in sw.rows]
        ax.loglog(h, e, "o-", label=f"{label} ({sw.rates.get(quantity, float('nan')):.2f})")
    ax.set_xlabel("h")
    ax.set_ylabel(quantity)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

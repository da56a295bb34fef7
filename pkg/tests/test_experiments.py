import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tricomi_dg.assembly import PenaltyConfig
from tricomi_dg.experiments import (
    CSV_COLUMNS, PENALTY_GRID, RunConfig, StageError, closest_level, fit_rate, h_sweep,
    p_sweep, penalty_sweep, run_solve, sample_solution, step_rates, write_csv,
    write_penalty_csv, write_rates_csv,
)
from tricomi_dg.geometry import DomainSpec, contains
from tricomi_dg.mesh import build_mesh
from tricomi_dg.problems import ManufacturedSolution, PolynomialSolution

U = ManufacturedSolution()


# -- manufactured solution ---------------------------------------------------
def test_manufactured_value():
    assert U(0.0, 0.25) == pytest.approx(0.1062011719, abs=5e-11)
    # closed form of the same product
    assert U(0.0, 0.25) == pytest.approx(0.25 ** 3 * 0.75 * (9 + 4 * 0.25 ** 3), rel=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1.3, 0.5))
def test_manufactured_vanishing_factors(x, y):
    assert U(1.0, y) == 0.0
    assert U(-1.0, y) == 0.0
    assert U(x, 0.0) == 0.0


def interior_points(n, seed=0):
    spec = DomainSpec()
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        q = rng.uniform([-1, spec.y_c], [1, spec.d])
        if contains(q, spec):
            pts.append(q)
    return np.array(pts)


def test_derivatives_match_central_differences():
    pts = interior_points(100)
    x, y = pts.T
    D = U.derivatives(x, y)
    step = 1e-5
    # first derivatives from u, second derivatives from the jet gradient
    fd = {
        "x": (U(x + step, y) - U(x - step, y)) / (2 * step),
        "y": (U(x, y + step) - U(x, y - step)) / (2 * step),
        "xx": (U.gradient(x + step, y)[:, 0] - U.gradient(x - step, y)[:, 0]) / (2 * step),
        "yy": (U.gradient(x, y + step)[:, 1] - U.gradient(x, y - step)[:, 1]) / (2 * step),
        "xy": (U.gradient(x, y + step)[:, 0] - U.gradient(x, y - step)[:, 0]) / (2 * step),
    }
    for k, v in fd.items():
        # relative to the size of the derivative over the sample
        scale = np.max(np.abs(D[k]))
        assert np.max(np.abs(v - D[k])) <= 1e-7 * scale, k


def test_source_is_operator_of_u():
    pts = interior_points(20, 1)
    x, y = pts.T
    D = U.derivatives(x, y)
    np.testing.assert_allclose(U.source(x, y), y * D["xx"] + D["yy"], rtol=1e-14)


def test_zero_polynomial_evaluates_with_shape():
    z = PolynomialSolution(np.zeros((3, 3)))
    assert z(np.zeros((4, 5)), np.ones((4, 5))).shape == (4, 5)
    c = PolynomialSolution([[2.0]])
    np.testing.assert_array_equal(c(np.arange(3.0), 0.0), [2.0, 2.0, 2.0])


# -- configuration -----------------------------------------------------------
def test_default_penalties():
    c = RunConfig()
    assert (c.gamma1, c.gamma2, c.gamma3, c.gamma4) == (10.0, 0.1, 0.1, 0.0)
    assert c.penalties == PenaltyConfig(10.0, 0.1, 0.1, 0.0)


@pytest.mark.parametrize("bad", [
    dict(p=1), dict(space="dg"), dict(gamma1=-1.0), dict(d=0.0), dict(level=None),
    dict(quad_order=3), dict(multiplier=(1.0, 2.0, 3.0)),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        RunConfig(**bad).validate()


def test_stage_tagged_errors():
    with pytest.raises(StageError, match=r"^\[config\]"):
        run_solve(RunConfig(p=1))
    with pytest.raises(StageError, match=r"^\[mesh\]"):
        run_solve(RunConfig(mesh="/nonexistent/mesh.txt", level=None))
    # b1 = c1 violates the multiplier conditions
    with pytest.raises(StageError, match=r"^\[config\].*multiplier"):
        run_solve(RunConfig(multiplier=(-2.0, 0.5, 1.0, 0.5)))


def test_closest_level():
    assert closest_level(0.1) == 4
    assert abs(build_mesh(DomainSpec(), 4).h - 0.1) < abs(build_mesh(DomainSpec(), 3).h - 0.1)


# -- rate fitting ------------------------------------------------------------
def test_fit_rate_examples():
    h = np.array([0.5, 0.25, 0.125, 0.0625])
    assert fit_rate(h, h ** 2) == pytest.approx(2.0, abs=1e-12)
    assert fit_rate([0.5, 0.25], [1.0, 0.25]) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(-3, 6),
       st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=6, unique=True))
def test_fit_rate_scale_invariant(c, r, hs):
    h = np.array(sorted(hs))
    if h[-1] / h[0] < 1.01:
        return
    assert fit_rate(h, c * h ** r) == pytest.approx(r, abs=1e-8)


@pytest.mark.parametrize("h,e", [([0.5, 0.25], [1.0, 0.0]), ([0.5, 0.25], [1.0, -1.0]),
                                 ([0.5], [1.0]), ([0.5, 0.25], [1.0, math.inf])])
def test_fit_rate_rejects(h, e):
    with pytest.raises(ValueError):
        fit_rate(h, e)


def test_step_rates():
    h = [0.4, 0.2, 0.1]
    assert step_rates(h, [16e-2, 4e-2, 1e-2]) == pytest.approx([2.0, 2.0])


# -- runs --------------------------------------------------------------------
def test_solve_row_has_all_columns():
    r = run_solve(RunConfig(space="qt", p=2, level=2))
    row = r.row()
    assert list(row) == CSV_COLUMNS
    assert row["space"] == "qt" and row["level"] == 2
    assert r.n_dofs == 5 * build_mesh(DomainSpec(), 2).n_elements
    assert r.solver_residual < 1e-10
    assert r.l2 ** 2 == pytest.approx(r.l2_elliptic ** 2 + r.l2_hyperbolic ** 2, rel=1e-10)
    text = write_csv([r])
    header, line = text.splitlines()
    assert header == ",".join(CSV_COLUMNS)
    assert float(line.split(",")[7]) == r.l2


def test_csv_bit_identical_on_repeat(tmp_path):
    cfg = RunConfig(space="et", p=3, level=2)
    a = write_csv([run_solve(cfg)], tmp_path / "a.csv")
    b = write_csv([run_solve(cfg)], tmp_path / "b.csv")
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_standard_p4_energy_decreases_with_refinement():
    e3 = run_solve(RunConfig(space="standard", p=4, level=3)).energy
    e4 = run_solve(RunConfig(space="standard", p=4, level=4)).energy
    assert e4 < e3


@pytest.mark.parametrize("kind", ["qt", "et"])
@pytest.mark.parametrize("p", [2, 3, 4])
def test_least_squares_term_changes_little(kind, p):
    a = run_solve(RunConfig(space=kind, p=p, level=3))
    b = run_solve(RunConfig(space=kind, p=p, level=3, gamma4=1.0))
    for q in ("energy", "l2"):
        ratio = getattr(b, q) / getattr(a, q)
        assert 0.5 <= ratio <= 2.0, (q, ratio)


def test_sample_solution_inside_domain():
    r = run_solve(RunConfig(space="standard", p=2, level=1))
    S = sample_solution(r.solution, n=11)
    assert S.shape[1] == 3 and len(S) > 0
    assert all(contains(q, DomainSpec()) for q in S[:, :2])
    np.testing.assert_allclose(S[:, 2], r.solution(S[:, :2]))


# -- sweeps ------------------------------------------------------------------
def test_h_sweep_needs_three_levels():
    with pytest.raises(StageError, match="config"):
        h_sweep(RunConfig(), [2, 3])


def test_h_sweep_rates_table():
    sw = h_sweep(RunConfig(space="qt", p=3), [1, 2, 3])
    assert sw.error is None and len(sw.rows) == 3
    hs = [r.h_max for r in sw.rows]
    assert hs == sorted(hs, reverse=True)
    assert sw.rates["energy"] == pytest.approx(fit_rate(hs, [r.energy for r in sw.rows]))
    assert len(sw.steps["l2"]) == 2
    lines = write_rates_csv(sw).splitlines()
    assert lines[0] == "quantity,kind,from_level,to_level,rate"
    assert "energy,fit,1,3," in "\n".join(lines)


def test_h_sweep_partial_table_on_failure(monkeypatch):
    import tricomi_dg.experiments as ex

    real = ex.run_solve

    def flaky(cfg, problem=None, mesh=None):
        if cfg.level == 3:
            raise StageError("solve", "boom")
        return real(cfg, problem, mesh)

    monkeypatch.setattr(ex, "run_solve", flaky)
    sw = ex.h_sweep(RunConfig(space="qt", p=2), [1, 2, 3])
    assert len(sw.rows) == 2 and "level 3" in sw.error and "[solve]" in sw.error
    assert "energy" in sw.rates


def test_p_sweep_bounds():
    with pytest.raises(StageError, match="config"):
        p_sweep(RunConfig(), [1, 2])
    with pytest.raises(StageError, match="config"):
        p_sweep(RunConfig(), [9])


@pytest.fixture(scope="module")
def p_tables():
    return {k: p_sweep(RunConfig(space=k, level=3), range(2, 9)) for k in ("standard", "qt", "et")}


def test_p_sweep_dof_counts(p_tables):
    n_el = build_mesh(DomainSpec(), 3).n_elements
    for k, sw in p_tables.items():
        assert sw.error is None
        for r in sw.rows:
            p = r.config.p
            per = (p + 1) * (p + 2) // 2 if k == "standard" else 2 * p + 1
            assert r.n_dofs == per * n_el


def test_p_sweep_monotone(p_tables):
    floor = 1e-11
    for k, sw in p_tables.items():
        for q in ("energy", "l2"):
            e = [getattr(r, q) for r in sw.rows]
            for a, b in zip(e, e[1:]):
                assert b < a or max(a, b) < floor, (k, q, e)


def test_trefftz_spaces_beat_standard_at_equal_dofs(p_tables):
    std = p_tables["standard"].rows
    logn = np.log([r.n_dofs for r in std])
    for k in ("qt", "et"):
        for r in p_tables[k].rows:
            if r.config.p < 5:
                continue
            for q in ("energy", "l2"):
                # standard-space error interpolated in log-log at the same dof count
                ref = np.exp(np.interp(np.log(r.n_dofs), logn, np.log([getattr(s, q) for s in std])))
                assert getattr(r, q) < ref, (k, r.config.p, q)


def test_penalty_grid_nodes():
    assert PENALTY_GRID.shape == (30,)
    assert PENALTY_GRID[0] == pytest.approx(1e-5) and PENALTY_GRID[-1] == pytest.approx(1e5)
    np.testing.assert_allclose(np.diff(np.log10(PENALTY_GRID)), 10 / 29)


def test_penalty_sweep_small_mesh():
    sw = penalty_sweep(RunConfig(space="qt", p=2, level=2))
    E = sw.errors
    assert E.shape == (30, 30)
    assert np.all(np.isfinite(E))
    d = sw.default_error
    assert d == pytest.approx(run_solve(RunConfig(space="qt", p=2, level=2)).l2, rel=1e-8)
    # both penalties tiny: unstable
    assert E[0, 0] >= 100 * d
    # one large penalty is enough
    g = sw.gammas
    i, j = np.argmin(abs(g - 1e3)), np.argmin(abs(g - 1e-3))
    assert E[i, j] <= 10 * d
    text = write_penalty_csv(sw).splitlines()
    assert text[0] == "gamma1,gamma2_gamma3,l2" and len(text) == 901


def test_penalty_sweep_degree_bounds():
    with pytest.raises(StageError, match="config"):
        penalty_sweep(RunConfig(p=5, level=1), gammas=[1.0])


def test_penalty_sweep_records_failures_as_inf(monkeypatch):
    import tricomi_dg.experiments as ex
    from tricomi_dg.assembly import SolverError

    real = ex.solve

    def picky(system):
        if system.penalties.gamma1 < 1:
            raise SolverError("singular")
        return real(system)

    monkeypatch.setattr(ex, "solve", picky)
    sw = ex.penalty_sweep(RunConfig(p=2, level=1), gammas=[0.1, 10.0])
    assert np.isinf(sw.errors[0]).all() and np.isfinite(sw.errors[1]).all()
    assert "inf" in write_penalty_csv(sw)

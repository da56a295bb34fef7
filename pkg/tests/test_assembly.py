import numpy as np
import pytest
import scipy.sparse as sp

from oracles import coercivity_identity, facet_points, local_values
from tricomi_dg.assembly import (
    LinearSystem, PenaltyConfig, SolutionField, SolverError, assemble, assemble_boundary_facets,
    assemble_interior_facets, assemble_least_squares, assemble_parts, assemble_source,
    assemble_volume, solve,
)
from tricomi_dg.geometry import DomainSpec
from tricomi_dg.mesh import FacetClass, Mesh, build_mesh, quality
from tricomi_dg.morawetz import Morawetz, constants
from tricomi_dg.norms import energy_norm, jump_seminorm, residual_norm
from tricomi_dg.problems import ManufacturedSolution, PolynomialSolution
from tricomi_dg.spaces import DiscreteSpace, SpaceConfig, monomial_exponents

SPEC = DomainSpec()
M49 = Morawetz.default()
MESH2 = build_mesh(SPEC, 2)
ZERO = PolynomialSolution([[0.0]])


def one_triangle():
    """The elliptic triangle (-1, 0), (1, 0), (0, d) as a one-element mesh."""
    V = [(-1.0, 0.0), (1.0, 0.0), (0.0, SPEC.d)]
    return Mesh(V, [(0, 1, 2)], [(0, 1, "gamma0"), (1, 2, "gamma0"), (2, 0, "gamma0")], SPEC)


def mono(p, j, k):
    return [tuple(e) for e in monomial_exponents(p)].index((j, k))


def dense(A, n):
    return np.asarray(A[:n, :n].todense())


def test_penalty_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(gamma1=0.0)
    with pytest.raises(ValueError):
        PenaltyConfig(gamma2=-1.0)
    with pytest.raises(ValueError):
        PenaltyConfig(gamma4=-0.1)
    assert PenaltyConfig() == PenaltyConfig(10.0, 0.1, 0.1, 0.0)


def test_constant_test_function_rows_vanish():
    S = DiscreteSpace(MESH2, SpaceConfig("standard", 2))
    Av = assemble_volume(S, M49).tocsr()
    F = assemble_source(S, M49, ManufacturedSolution())
    rows = S.dofs(np.arange(MESH2.n_elements))[:, mono(2, 0, 0)]
    assert np.abs(Av[rows].toarray()).max() == 0.0
    assert np.all(F[rows] == 0.0)


def test_single_triangle_volume_entry():
    mesh = one_triangle()
    S = DiscreteSpace(mesh, SpaceConfig("standard", 2))
    h = mesh.h_T[0]
    i = mono(2, 1, 0)  # xi = (x - x_T) / h
    A = assemble_volume(S, M49).toarray()
    # int_T y over the triangle: area * centroid height
    int_y = 0.5 * 2 * SPEC.d * (SPEC.d / 3)
    assert A[i, i] == pytest.approx(-0.5 * int_y / h ** 2, rel=1e-13)


def test_single_triangle_source_entry():
    mesh = one_triangle()
    S = DiscreteSpace(mesh, SpaceConfig("standard", 2))
    one = PolynomialSolution([[0.0, 0.0, 0.5]])  # f = 1
    F = assemble_source(S, M49, one)
    h = mesh.h_T[0]
    # int_T b = b0 |T| + b1 int_T x and int_T x = 0 by symmetry
    assert F[mono(2, 1, 0)] == pytest.approx(-2.0 * SPEC.d / h, rel=1e-13)
    assert np.all(assemble_source(S, M49, ZERO) == 0)
    assert F[mono(2, 0, 0)] == 0


@pytest.mark.parametrize("kind", ["standard", "qt", "et"])
def test_volume_linear_in_multiplier(kind):
    S = DiscreteSpace(MESH2, SpaceConfig(kind, 3), ManufacturedSolution())
    A1 = assemble_volume(S, M49)
    A2 = assemble_volume(S, M49.scaled(2.0))
    assert abs(A2 - 2 * A1).max() <= 1e-13 * abs(A1).max()


@pytest.mark.parametrize("kind", ["standard", "qt", "et"])
@pytest.mark.parametrize("p", [2, 3])
def test_integration_by_parts_identity_oracle(kind, p):
    S = DiscreteSpace(MESH2, SpaceConfig(kind, p))
    pen = PenaltyConfig(10.0, 0.3, 0.7)
    parts = assemble_parts(S, M49)
    n = S.n_dofs
    A = dense(parts.A_h + parts.jump_matrix(pen), n)
    rng = np.random.default_rng(7 + p)
    for _ in range(5):
        x = rng.standard_normal(n)
        ref = coercivity_identity(S, M49, pen, x)
        assert x @ A @ x == pytest.approx(ref, rel=1e-9)


def test_interior_orientation_invariance():
    S = DiscreteSpace(MESH2, SpaceConfig("standard", 2))
    x = np.random.default_rng(3).standard_normal(S.n_dofs)
    pen = PenaltyConfig()
    a = coercivity_identity(S, M49, pen, x)
    b = coercivity_identity(S, M49, pen, x, flip=True)
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("kind", ["standard", "qt", "et"])
def test_jump_matrix_matches_seminorm(kind):
    S = DiscreteSpace(MESH2, SpaceConfig(kind, 3))
    pen = PenaltyConfig(3.0, 0.2, 5.0)
    parts = assemble_parts(S, M49)
    J = dense(parts.jump_matrix(pen), S.n_dofs)
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.standard_normal(S.n_dofs)
        js = jump_seminorm(SolutionField(S, x), pen)
        assert np.sqrt(x @ J @ x) == pytest.approx(js, rel=1e-10)


def test_smooth_polynomial_has_zero_interior_jumps():
    u = PolynomialSolution.random(3, 5)
    S = DiscreteSpace(MESH2, SpaceConfig("standard", 3))
    x = interpolate(S, u)
    _, J1, J2 = assemble_interior_facets(S, M49)
    n = S.n_dofs
    assert abs(x @ dense(J1, n) @ x) < 1e-10 * (x @ x)
    assert abs(x @ dense(J2, n) @ x) < 1e-10 * (x @ x)


def test_boundary_parts():
    S = DiscreteSpace(MESH2, SpaceConfig("standard", 2))
    A, J1, J3, G1, G3 = assemble_boundary_facets(S, M49, ZERO)
    assert np.all(G1 == 0) and np.all(G3 == 0)
    # constant test functions: v_t = 0, only the gamma1 term survives
    const = S.dofs(np.arange(MESH2.n_elements))[:, mono(2, 0, 0)]
    J1d, J3d = J1.toarray(), J3.toarray()
    assert np.abs(J3d[const]).max() == 0
    dirichlet = np.unique(MESH2.facet_elements[MESH2.facets_of_class(FacetClass.GAMMA0, FacetClass.GAMMA1), 0])
    assert np.all(J1d[const[dirichlet], const[dirichlet]] > 0)
    # Gamma2-only elements receive no penalty
    g2 = set(MESH2.facet_elements[MESH2.facets_of_class(FacetClass.GAMMA2), 0])
    only2 = [e for e in g2 if e not in set(dirichlet)]
    for e in only2:
        assert np.abs(J1d[S.dofs([e])[0]]).max() == 0


def test_tangential_derivative_matches_finite_difference():
    S = DiscreteSpace(MESH2, SpaceConfig("standard", 3))
    x = np.random.default_rng(2).standard_normal(S.n_dofs)
    f = int(MESH2.facets_of_class(FacetClass.GAMMA0)[0])
    e = int(MESH2.facet_elements[f, 0])
    pts, _, n = facet_points(MESH2, f, 4, e)
    t = np.column_stack([-n[:, 1], n[:, 0]])
    V = local_values(S, e, x, pts)
    vt = t[:, 0] * V["x"] + t[:, 1] * V["y"]
    step = 1e-6
    fd = (local_values(S, e, x, pts + step * t)["v"] - local_values(S, e, x, pts - step * t)["v"]) / (2 * step)
    assert np.allclose(vt, fd, rtol=1e-6, atol=1e-6)


def test_least_squares_parts():
    S = DiscreteSpace(MESH2, SpaceConfig("standard", 2))
    A0, b0 = assemble_least_squares(S, ManufacturedSolution(), 0.0)
    assert A0.nnz == 0 and np.all(b0 == 0)
    A, _ = assemble_least_squares(S, ManufacturedSolution(), 1.0)
    # v = xi and v = 1 are Trefftz functions (L v = 0)
    cols = S.dofs(np.arange(MESH2.n_elements))[:, [mono(2, 0, 0), mono(2, 1, 0), mono(2, 0, 1)]].ravel()
    assert np.abs(A.toarray()[cols]).max() == 0


def test_least_squares_quasi_trefftz_entries_are_small():
    # L v vanishes at x_T for quasi-Trefftz functions, so their entries drop
    # like h^2 relative to the standard ones
    ratios = []
    for level in (2, 3, 4):
        mesh = build_mesh(SPEC, level)
        e = int(np.argmin(np.linalg.norm(mesh.centroids() - [0.0, -0.8], axis=1)))
        diag = {}
        for kind in ("standard", "qt"):
            S = DiscreteSpace(mesh, SpaceConfig(kind, 2))
            A, _ = assemble_least_squares(S, None, 1.0)
            d = A.diagonal()[S.dofs([e])[0]]
            diag[kind] = d.max()
        ratios.append(diag["qt"] / diag["standard"])
    assert ratios[0] < 0.5
    r = np.array(ratios)
    assert np.all(r[1:] / r[:-1] < 0.4)


def interpolate(space, u):
    """Coefficients of the elementwise L2 projection (exact for u in the space)."""
    from tricomi_dg.quadrature import element_rule
    x = np.zeros(space.n_dofs)
    for e in range(space.mesh.n_elements):
        q = element_rule(space.mesh, e, 2 * space.p + 2)
        V = space.element_basis(e).evaluate(q.points, ("v",))["v"]
        G = V.T @ (q.weights[:, None] * V)
        r = V.T @ (q.weights * u(q.points[:, 0], q.points[:, 1]))
        x[space.dofs([e])[0]] = np.linalg.solve(G, r)
    return x


@pytest.mark.parametrize("p", [2, 3])
def test_consistency_and_galerkin_orthogonality(p):
    u = PolynomialSolution.random(p, 100 + p)
    mesh = build_mesh(SPEC, 2)
    S = DiscreteSpace(mesh, SpaceConfig("standard", p))
    sysm = assemble(S, M49, u)
    x = interpolate(S, u)
    r = sysm.matrix @ x - sysm.rhs
    assert np.abs(r).max() <= 1e-9 * max(np.abs(sysm.rhs).max(), 1.0)
    uh = solve(sysm)
    from tricomi_dg.norms import ErrorField
    err = energy_norm(ErrorField(u, uh), M49)
    ref = energy_norm(SolutionField(S, x), M49)
    assert err <= 1e-8 * ref


def test_boundedness():
    mesh = build_mesh(SPEC, 2)
    pen = PenaltyConfig()
    c = constants(M49, SPEC, quality(mesh), pen.gamma2)
    for kind in ("standard", "qt", "et"):
        S = DiscreteSpace(mesh, SpaceConfig(kind, 3))
        parts = assemble_parts(S, M49)
        A = dense(parts.A_h + parts.jump_matrix(pen), S.n_dofs)
        rng = np.random.default_rng(1)
        for _ in range(10):
            v, w = rng.standard_normal((2, S.n_dofs))
            lhs = w @ A @ v
            bound = c.M_cont * residual_norm(SolutionField(S, v), pen) * energy_norm(SolutionField(S, w), M49, pen)
            assert abs(lhs) <= bound


def test_coercivity_at_threshold():
    mesh = build_mesh(SPEC, 1)
    g = constants(M49, SPEC, quality(mesh), 0.1).gamma_star
    pen = PenaltyConfig(10.0, g, g)
    for kind in ("standard", "qt", "et"):
        S = DiscreteSpace(mesh, SpaceConfig(kind, 2))
        parts = assemble_parts(S, M49)
        A = dense(parts.A_h + parts.jump_matrix(pen), S.n_dofs)
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = rng.standard_normal(S.n_dofs)
            assert x @ A @ x >= 0.25 * energy_norm(SolutionField(S, x), M49, pen) ** 2


def test_sparsity_pattern_and_coverage():
    S = DiscreteSpace(MESH2, SpaceConfig("qt", 3))
    A = assemble(S, M49, ManufacturedSolution()).matrix.tocoo()
    eb = lambda i: i // S.dim
    neighbours = {(e, e) for e in range(MESH2.n_elements)}
    for a, b in MESH2.facet_elements[MESH2.facet_class == FacetClass.INTERIOR]:
        neighbours |= {(a, b), (b, a)}
    assert all((eb(i), eb(j)) in neighbours for i, j in zip(A.row, A.col))
    touched = np.zeros(S.n_dofs, bool)
    touched[A.row] = True
    assert touched.all()


def test_assembly_is_deterministic():
    S = DiscreteSpace(MESH2, SpaceConfig("et", 3), ManufacturedSolution())
    a = assemble(S, M49, ManufacturedSolution())
    b = assemble(S, M49, ManufacturedSolution())
    assert (a.matrix != b.matrix).nnz == 0
    assert np.array_equal(a.rhs, b.rhs)


def test_solve_identity_stub():
    S = DiscreteSpace(one_triangle(), SpaceConfig("standard", 2))
    b = np.arange(1.0, S.n_dofs + 1)
    stub = LinearSystem(sp.identity(S.n_dofs, format="csr"), b, S, M49, PenaltyConfig(), None)
    out = solve(stub)
    assert np.array_equal(out.x, b) and out.solver_residual == 0.0


def test_single_element_dirichlet_recovers_linear():
    mesh = one_triangle()
    u = PolynomialSolution([[1.0, -1.0], [2.0, 0.0]])  # 1 + 2x - y
    S = DiscreteSpace(mesh, SpaceConfig("standard", 2))
    uh = solve(assemble(S, M49, u, PenaltyConfig(100.0, 1.0, 1.0)))
    pts = np.array([[0.0, 0.1], [0.3, 0.2], [-0.5, 0.05]])
    assert np.allclose(uh(pts), u(pts[:, 0], pts[:, 1]), atol=1e-12)


def test_singular_system_raises():
    S = DiscreteSpace(one_triangle(), SpaceConfig("standard", 2))
    bad = LinearSystem(sp.csr_matrix((S.n_dofs, S.n_dofs)), np.ones(S.n_dofs), S, M49, PenaltyConfig(), None)
    with pytest.raises(SolverError):
        solve(bad)


def test_with_penalties_matches_fresh_assembly():
    u = ManufacturedSolution()
    S = DiscreteSpace(MESH2, SpaceConfig("qt", 2), u)
    a = assemble(S, M49, u, PenaltyConfig(1.0, 2.0, 3.0))
    b = assemble(S, M49, u).with_penalties(PenaltyConfig(1.0, 2.0, 3.0))
    assert abs(a.matrix - b.matrix).max() <= 1e-14 * abs(a.matrix).max()
    assert np.allclose(a.rhs, b.rhs, rtol=1e-14, atol=0)

"""Assembly of the Morawetz-multiplier DG system and its solution.

Global unknowns are the basis coefficients of every element, stored in
contiguous blocks.  For affine (Trefftz-type) spaces the elementwise
particular solutions form one extra column with index ``n`` whose coefficient
is fixed to one; it is moved to the right-hand side before solving.

The matrix is kept as a sum of parts with unit penalties so that the
penalties can be changed without reassembling:

``A = A_h + g1 J1 + g2 J2 + g3 J3 + g4 LS`` and
``rhs = F + g1 G1 + g3 G3 + g4 FLS``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import FacetClass
from .morawetz import Morawetz
from .quadrature import element_batches, facet_batches
from .spaces import DERIVS, DiscreteSpace, _scaled, monomial_table

CHUNK = 1024
SOLVER_TOL = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    gamma1: float = 10.0
    gamma2: float = 0.1
    gamma3: float = 0.1
    gamma4: float = 0.0

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "gamma3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.gamma4 >= 0:
            raise ValueError(f"gamma4 must be nonnegative, got {self.gamma4}")


# ----------------------------------------------------------------------
# helpers
def _chunks(ids, *arrays, size=CHUNK):
    for s in range(0, len(ids), size):
        yield (ids[s:s + size],) + tuple(a[s:s + size] for a in arrays)


def _global_index(space: DiscreteSpace, ids) -> np.ndarray:
    """Local-to-global map including the affine column ``n``."""
    d = space.dofs(ids)
    extra = np.full(d.shape[:-1] + (1,), space.n_dofs)
    return np.concatenate([d, extra], axis=-1)


class _Collector:
    """Accumulates dense blocks into COO triplets."""

    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add(self, gi, gj, blocks):
        r = np.broadcast_to(gi[:, :, None], blocks.shape)
        c = np.broadcast_to(gj[:, None, :], blocks.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(blocks.ravel())

    def matrix(self):
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        return sp.coo_matrix((v, (r, c)), shape=(self.n, self.n)).tocsr()


def _vector(n, gi, vals):
    out = np.zeros(n)
    np.add.at(out, gi.ravel(), vals.ravel())
    return out


def _multiplier_terms(m: Morawetz, pts, V):
    """``M v`` and ``grad(M v)`` for basis values ``V`` at points ``pts``."""
    b, c = m.eval(pts)
    b, c = b[..., None], c[..., None]
    Mv = b * V["x"] + c * V["y"]
    gx = m.b1 * V["x"] + b * V["xx"] + c * V["xy"]
    gy = b * V["xy"] + m.c1 * V["y"] + c * V["yy"]
    return Mv, gx, gy


def _source(problem, pts):
    if problem is None:
        return np.zeros(pts.shape[:-1])
    return problem.source(pts[..., 0], pts[..., 1])


def _element_chunks(space, order):
    for batch in element_batches(space.mesh, order):
        for ids, pts, w in _chunks(batch.ids, batch.points, batch.weights):
            yield ids, pts, w


# ----------------------------------------------------------------------
# element contributions
def assemble_volume(space: DiscreteSpace, m: Morawetz, order: int | None = None):
    """``-sum_T int_T W grad(u) . grad(M v)``; rows are test functions."""
    order = order or space.order
    n = space.n_dofs + 1
    col = _Collector(n)
    for ids, pts, w in _element_chunks(space, order):
        V = space.eval(ids, pts, with_offset=True)
        _, gx, gy = _multiplier_terms(m, pts, V)
        K = pts[..., 1][..., None]
        blk = -(np.einsum("eq,eqi,eqj->eij", w, gx, K * V["x"])
                + np.einsum("eq,eqi,eqj->eij", w, gy, V["y"]))
        gi = _global_index(space, ids)
        col.add(gi, gi, blk)
    return col.matrix()


def assemble_source(space: DiscreteSpace, m: Morawetz, problem, order: int | None = None):
    """``sum_T int_T f M v``."""
    order = order or space.order
    n = space.n_dofs + 1
    out = np.zeros(n)
    for ids, pts, w in _element_chunks(space, order):
        V = space.eval(ids, pts, ("x", "y"), with_offset=True)
        Mv, _, _ = _multiplier_terms(m, pts, {**V, "xx": 0, "xy": 0, "yy": 0})
        f = _source(problem, pts)
        out += _vector(n, _global_index(space, ids), np.einsum("eq,eq,eqi->ei", w, f, Mv))
    return out


def assemble_least_squares(space: DiscreteSpace, problem, gamma4: float = 1.0,
                           order: int | None = None):
    """``gamma4 int L u L v`` and ``gamma4 int f L v``; a no-op for ``gamma4 = 0``."""
    order = order or space.order
    n = space.n_dofs + 1
    col = _Collector(n)
    rhs = np.zeros(n)
    if gamma4 == 0:
        return col.matrix(), rhs
    for ids, pts, w in _element_chunks(space, order):
        V = space.eval(ids, pts, ("xx", "yy"), with_offset=True)
        L = pts[..., 1][..., None] * V["xx"] + V["yy"]
        gi = _global_index(space, ids)
        col.add(gi, gi, gamma4 * np.einsum("eq,eqi,eqj->eij", w, L, L))
        f = _source(problem, pts)
        rhs += _vector(n, gi, gamma4 * np.einsum("eq,eq,eqi->ei", w, f, L))
    return col.matrix(), rhs


# ----------------------------------------------------------------------
# facet contributions
def _side(space, ids, pts):
    return space.eval(ids, pts, ("v", "x", "y"), with_offset=True)


def assemble_interior_facets(space: DiscreteSpace, m: Morawetz, order: int | None = None):
    """Interior facet parts ``(A_h, J1, J2)`` with unit penalties.

    ``A_h`` holds ``{W grad u} . [M v]``; ``J1`` holds ``h^-3 [u].[v]`` and
    ``J2`` holds ``p^2 h^-1 ([u_x].[v_x] + [u_y].[v_y])``.
    """
    order = order or space.order
    n = space.n_dofs + 1
    cols = [_Collector(n) for _ in range(3)]
    batch = facet_batches(space.mesh, order).get(FacetClass.INTERIOR)
    if batch is None:
        return tuple(c.matrix() for c in cols)
    p2 = space.p ** 2
    for ids, el, pts, w, nrm, h in _chunks(batch.ids, batch.elements, batch.points,
                                          batch.weights, batch.normals, batch.h):
        A = _side(space, el[:, 0], pts)
        B = _side(space, el[:, 1], pts)
        K = pts[..., 1][..., None]
        nx, ny = nrm[..., 0][..., None], nrm[..., 1][..., None]
        cat = lambda a, b: np.concatenate([a, b], axis=-1)
        jv = cat(A["v"], -B["v"])
        jx = cat(A["x"], -B["x"])
        jy = cat(A["y"], -B["y"])
        MA, _, _ = _multiplier_terms(m, pts, {**A, "xx": 0, "xy": 0, "yy": 0})
        MB, _, _ = _multiplier_terms(m, pts, {**B, "xx": 0, "xy": 0, "yy": 0})
        jM = cat(MA, -MB)
        flux = 0.5 * cat(K * A["x"] * nx + A["y"] * ny, K * B["x"] * nx + B["y"] * ny)
        gi = np.concatenate([_global_index(space, el[:, 0]), _global_index(space, el[:, 1])], axis=1)
        cols[0].add(gi, gi, np.einsum("eq,eqi,eqj->eij", w, jM, flux))
        cols[1].add(gi, gi, np.einsum("eq,eqi,eqj->eij", w / h[:, None] ** 3, jv, jv))
        cols[2].add(gi, gi, p2 * (np.einsum("eq,eqi,eqj->eij", w / h[:, None], jx, jx)
                                  + np.einsum("eq,eqi,eqj->eij", w / h[:, None], jy, jy)))
    return tuple(c.matrix() for c in cols)


def assemble_boundary_facets(space: DiscreteSpace, m: Morawetz, problem=None,
                             order: int | None = None):
    """Boundary parts with unit penalties.

    Returns ``(A_h, J1, J3, G1, G3)``: the flux term ``W grad u . n M v`` on all
    boundary facets, the penalties ``h^-3 u v`` and ``p^2 h^-1 u_t v_t`` on the
    Dirichlet facets (Gamma0 and Gamma1) and the matching data vectors built
    from ``g = u`` and ``g_t = grad u . t`` of ``problem``.  Gamma2 receives the
    flux term only.
    """
    order = order or space.order
    n = space.n_dofs + 1
    cols = [_Collector(n) for _ in range(3)]
    G1, G3 = np.zeros(n), np.zeros(n)
    p2 = space.p ** 2
    for cls, batch in facet_batches(space.mesh, order).items():
        if cls is FacetClass.INTERIOR:
            continue
        for ids, el, pts, w, nrm, h in _chunks(batch.ids, batch.elements, batch.points,
                                              batch.weights, batch.normals, batch.h):
            e = el[:, 0]
            V = _side(space, e, pts)
            K = pts[..., 1][..., None]
            nx, ny = nrm[..., 0][..., None], nrm[..., 1][..., None]
            Mv, _, _ = _multiplier_terms(m, pts, {**V, "xx": 0, "xy": 0, "yy": 0})
            flux = K * V["x"] * nx + V["y"] * ny
            gi = _global_index(space, e)
            cols[0].add(gi, gi, np.einsum("eq,eqi,eqj->eij", w, Mv, flux))
            if not cls.dirichlet:
                continue
            vt = -ny * V["x"] + nx * V["y"]
            w1 = w / h[:, None] ** 3
            w3 = p2 * w / h[:, None]
            cols[1].add(gi, gi, np.einsum("eq,eqi,eqj->eij", w1, V["v"], V["v"]))
            cols[2].add(gi, gi, np.einsum("eq,eqi,eqj->eij", w3, vt, vt))
            if problem is not None:
                g = problem(pts[..., 0], pts[..., 1])
                grad = problem.gradient(pts[..., 0], pts[..., 1])
                gt = -nrm[..., 1] * grad[..., 0] + nrm[..., 0] * grad[..., 1]
                G1 += _vector(n, gi, np.einsum("eq,eq,eqi->ei", w1, g, V["v"]))
                G3 += _vector(n, gi, np.einsum("eq,eq,eqi->ei", w3, gt, vt))
    return tuple(c.matrix() for c in cols) + (G1, G3)


# ----------------------------------------------------------------------
@dataclass
class SystemParts:
    """Unit-penalty pieces over ``n + 1`` unknowns (last one: affine column)."""

    A_h: sp.csr_matrix
    J1: sp.csr_matrix
    J2: sp.csr_matrix
    J3: sp.csr_matrix
    LS: sp.csr_matrix | None
    F: np.ndarray
    G1: np.ndarray
    G3: np.ndarray
    FLS: np.ndarray | None

    def jump_matrix(self, pen: PenaltyConfig) -> sp.csr_matrix:
        return (pen.gamma1 * self.J1 + pen.gamma2 * self.J2 + pen.gamma3 * self.J3).tocsr()

    def full(self, pen: PenaltyConfig):
        A = self.A_h + self.jump_matrix(pen)
        b = self.F + pen.gamma1 * self.G1 + pen.gamma3 * self.G3
        if pen.gamma4:
            if self.LS is None:
                raise ValueError("least-squares part was not assembled")
            A = A + pen.gamma4 * self.LS
            b = b + pen.gamma4 * self.FLS
        return A.tocsr(), b


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix  # (n, n)
    rhs: np.ndarray  # (n,), affine column already moved over
    space: DiscreteSpace
    morawetz: Morawetz
    penalties: PenaltyConfig
    parts: SystemParts
    problem: object = None

    @property
    def n(self) -> int:
        return self.space.n_dofs

    def dof_blocks(self) -> np.ndarray:
        """Global dof indices per element, shape ``(n_elements, dim)``."""
        return self.space.dofs(np.arange(self.space.mesh.n_elements))

    def with_penalties(self, penalties: PenaltyConfig) -> "LinearSystem":
        return _finish(self.parts, self.space, self.morawetz, penalties, self.problem)


def _finish(parts, space, m, pen, problem) -> LinearSystem:
    A, b = parts.full(pen)
    n = space.n_dofs
    rhs = b[:n] - np.asarray(A[:n, n].todense()).ravel()
    return LinearSystem(A[:n, :n].tocsr(), rhs, space, m, pen, parts, problem)


def assemble_parts(space: DiscreteSpace, m: Morawetz, problem=None, order: int | None = None,
                   least_squares: bool = False) -> SystemParts:
    Av = assemble_volume(space, m, order)
    Ai, J1i, J2 = assemble_interior_facets(space, m, order)
    Ab, J1b, J3, G1, G3 = assemble_boundary_facets(space, m, problem, order)
    F = assemble_source(space, m, problem, order)
    LS = FLS = None
    if least_squares:
        LS, FLS = assemble_least_squares(space, problem, 1.0, order)
    return SystemParts((Av + Ai + Ab).tocsr(), (J1i + J1b).tocsr(), J2, J3, LS, F, G1, G3, FLS)


def assemble(space: DiscreteSpace, m: Morawetz, problem=None,
             penalties: PenaltyConfig | None = None, order: int | None = None) -> LinearSystem:
    pen = penalties or PenaltyConfig()
    parts = assemble_parts(space, m, problem, order, least_squares=pen.gamma4 > 0)
    return _finish(parts, space, m, pen, problem)


# ----------------------------------------------------------------------
class SolutionField:
    """Discrete solution: per-element monomial coefficients of ``u_h``."""

    def __init__(self, space: DiscreteSpace, x: np.ndarray, solver_residual: float = 0.0):
        self.space = space
        self.x = np.asarray(x, float)
        nE = space.mesh.n_elements
        local = self.x.reshape(nE, space.dim)
        self.monomials = np.einsum("emi,ei->em", space.coeffs, local)
        if space.offsets is not None:
            self.monomials = self.monomials + space.offsets
        self.solver_residual = float(solver_residual)

    @property
    def mesh(self):
        return self.space.mesh

    def eval(self, ids, points, derivs=DERIVS) -> dict:
        """Values at ``points`` of shape ``(n, nq, 2)`` on elements ``ids``."""
        T = self.space.tables(ids, points, derivs)
        C = self.monomials[ids]
        return {k: np.einsum("eqm,em->eq", v, C) for k, v in T.items()}

    def locate(self, points) -> np.ndarray:
        """Element containing each point (straight-sided test, -1 if none)."""
        mesh = self.mesh
        P = mesh.vertices[mesh.elements]  # (nE, 3, 2)
        pts = np.atleast_2d(np.asarray(points, float))
        out = np.full(len(pts), -1)
        A, B, C = P[:, 0], P[:, 1], P[:, 2]
        cross = lambda o, a, q: (a[:, 0] - o[:, 0]) * (q[..., 1] - o[:, 1]) - (a[:, 1] - o[:, 1]) * (q[..., 0] - o[:, 0])
        for k, q in enumerate(pts):
            qq = q[None]
            inside = ((cross(A, B, qq) >= -1e-12) & (cross(B, C, qq) >= -1e-12)
                      & (cross(C, A, qq) >= -1e-12))
            hit = np.flatnonzero(inside)
            if len(hit):
                out[k] = hit[0]
            else:
                # points in the sliver between a chord and a curved facet
                d = np.linalg.norm(mesh.centroids() - q, axis=1)
                out[k] = int(np.argmin(d))
        return out

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        ids = self.locate(pts)
        return self.eval(ids, pts[:, None, :], ("v",))["v"][:, 0]


def solve(system: LinearSystem, refine_steps: int = 3, tol: float = SOLVER_TOL) -> SolutionField:
    """Direct sparse LU solve with optional iterative refinement."""
    A = system.matrix.tocsc()
    b = system.rhs
    nb = np.linalg.norm(b)
    if A.shape[0] == 0:
        raise SolverError("solve: empty system")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:  # exactly singular
        raise SolverError(f"solve: factorization failed ({exc}); n={A.shape[0]}") from exc
    x = lu.solve(b)
    scale = nb if nb > 0 else 1.0
    res = np.linalg.norm(A @ x - b) / scale
    for _ in range(refine_steps):
        if res <= tol * 1e-2 or not np.isfinite(res):
            break
        x_new = x + lu.solve(b - A @ x)
        res_new = np.linalg.norm(A @ x_new - b) / scale
        if res_new >= res:
            break
        x, res = x_new, res_new
    if not np.isfinite(res) or res > tol:
        diag = np.abs(lu.U.diagonal())
        ratio = diag.max() / max(diag.min(), np.finfo(float).tiny)
        raise SolverError(
            f"solve: relative residual {res:.3e} exceeds {tol:.0e} "
            f"(n={A.shape[0]}, pivot ratio {ratio:.3e})")
    return SolutionField(system.space, x, res)

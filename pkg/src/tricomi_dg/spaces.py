"""Local polynomial spaces: standard, quasi-Trefftz and embedded Trefftz.

Every basis function is stored as a coefficient vector over the shifted and
scaled monomials ``xi^j eta^k`` (``j + k <= p``) with
``xi = (x - x_T) / h_T`` and ``eta = (y - y_T) / h_T``, where ``x_T`` is the
vertex average of the element.  Trefftz-type spaces are affine; their
particular solution is kept as a separate coefficient vector (the offset).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import Mesh
from .quadrature import element_batches, element_rule

DERIVS = ("v", "x", "y", "xx", "xy", "yy")


class RankError(RuntimeError):
    pass


class SpaceKind(enum.Enum):
    STANDARD = "standard"
    QUASI_TREFFTZ = "qt"
    EMBEDDED_TREFFTZ = "et"

    @classmethod
    def parse(cls, value) -> "SpaceKind":
        if isinstance(value, SpaceKind):
            return value
        v = str(value).lower()
        aliases = {"quasitrefftz": "qt", "quasi-trefftz": "qt", "embeddedtrefftz": "et",
                   "embedded-trefftz": "et", "p": "standard"}
        return cls(aliases.get(v, v))


@dataclass(frozen=True)
class SpaceConfig:
    kind: SpaceKind = SpaceKind.STANDARD
    p: int = 2
    orthonormalize: bool | None = None  # None: on for p >= 5
    tol_rank: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", SpaceKind.parse(self.kind))
        if int(self.p) != self.p or self.p < 2:
            raise ValueError(f"space degree must be an integer >= 2, got {self.p}")

    @property
    def ortho(self) -> bool:
        return self.p >= 5 if self.orthonormalize is None else bool(self.orthonormalize)

    def local_dim(self) -> int:
        if self.kind is SpaceKind.STANDARD:
            return n_monomials(self.p)
        return 2 * self.p + 1


# ----------------------------------------------------------------------
# monomials
def n_monomials(p: int) -> int:
    return (p + 1) * (p + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(p: int) -> np.ndarray:
    """Exponents ``(j, k)`` ordered by total degree."""
    out = [(d - k, k) for d in range(p + 1) for k in range(d + 1)]
    a = np.array(out, dtype=int)
    a.setflags(write=False)
    return a


def monomial_index(p: int) -> dict:
    return {(int(j), int(k)): i for i, (j, k) in enumerate(monomial_exponents(p))}


def monomial_table(xi, eta, h, p: int, derivs=DERIVS) -> dict:
    """Scaled monomials and their physical derivatives.

    ``xi, eta`` have shape ``(..., nq)`` and ``h`` broadcasts against
    ``(...,)``; results have shape ``(..., nq, n_monomials(p))``.
    """
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    h = np.asarray(h, float)[..., None, None]
    X = np.stack([np.ones_like(xi)] + [xi ** k for k in range(1, p + 1)], axis=-1)
    Y = np.stack([np.ones_like(eta)] + [eta ** k for k in range(1, p + 1)], axis=-1)
    J, K = monomial_exponents(p).T
    zero = np.zeros_like(X[..., :1])

    def shifted(P, n):
        # P[..., m - n] with zeros for m < n
        if n == 0:
            return P
        return np.concatenate([zero] * n + [P[..., :-n]], axis=-1) if n <= p else np.zeros_like(P)

    fall = lambda E, n: np.prod([E - i for i in range(n)], axis=0) if n else np.ones_like(E)
    out = {}
    orders = {"v": (0, 0), "x": (1, 0), "y": (0, 1), "xx": (2, 0), "xy": (1, 1), "yy": (0, 2)}
    for name in derivs:
        a, b = orders[name]
        Xa, Yb = shifted(X, a), shifted(Y, b)
        out[name] = (Xa[..., J] * Yb[..., K]) * (fall(J, a) * fall(K, b)) / h ** (a + b)
    return out


def _scaled(points, center, h):
    points = np.asarray(points, float)
    c = np.asarray(center, float)[..., None, :]
    hh = np.asarray(h, float)[..., None]
    return (points[..., 0] - c[..., 0]) / hh, (points[..., 1] - c[..., 1]) / hh


def apply_operator(table: dict, y) -> np.ndarray:
    """``K v_xx + v_yy`` with ``K(y) = y`` from an evaluated table."""
    return np.asarray(y)[..., None] * table["xx"] + table["yy"]


# ----------------------------------------------------------------------
@dataclass
class ElementBasis:
    """Basis of one element's local space."""

    element: int
    center: np.ndarray
    h: float
    p: int
    coeffs: np.ndarray  # (n_monomials, dim)
    offset: np.ndarray | None = None  # (n_monomials,)

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    def evaluate(self, points, derivs=DERIVS) -> dict:
        """Values and derivatives of all basis functions: ``{name: (npts, dim)}``."""
        xi, eta = _scaled(points, self.center, self.h)
        T = monomial_table(xi, eta, self.h, self.p, derivs)
        return {k: v @ self.coeffs for k, v in T.items()}

    def evaluate_offset(self, points, derivs=DERIVS) -> dict:
        xi, eta = _scaled(points, self.center, self.h)
        T = monomial_table(xi, eta, self.h, self.p, derivs)
        if self.offset is None:
            return {k: np.zeros(v.shape[:-1]) for k, v in T.items()}
        return {k: v @ self.offset for k, v in T.items()}


def evaluate(basis: ElementBasis, points, derivs=DERIVS) -> dict:
    return basis.evaluate(points, derivs)


# ----------------------------------------------------------------------
# batched constructions; ``centers`` (n, 2), ``hs`` (n,)
def _orthonormalize(coeffs, centers, hs, p, points, weights):
    """L2(T)-orthonormal recombination via QR of the weighted value matrix."""
    xi, eta = _scaled(points, centers, hs)
    V = monomial_table(xi, eta, hs, p, ("v",))["v"] @ coeffs
    Q, R = np.linalg.qr(np.sqrt(weights)[..., None] * V)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    R = R * d[..., :, None]
    eye = np.broadcast_to(np.eye(R.shape[-1]), R.shape)
    Rinv = np.linalg.solve(R, eye)
    return coeffs @ Rinv


def standard_coeffs(n: int, p: int) -> np.ndarray:
    return np.broadcast_to(np.eye(n_monomials(p)), (n, n_monomials(p), n_monomials(p))).copy()


def qt_coeffs(centers, hs, p: int, source_taylor=None):
    """Quasi-Trefftz recursion.

    Returns ``(basis, particular)`` with ``basis`` of shape ``(n, nmono, 2p+1)``
    and ``particular`` of shape ``(n, nmono)`` (zero when ``source_taylor`` is
    None).  ``source_taylor`` holds the Taylor coefficients of ``f`` at the
    centres, shape ``(p-1, p-1, n)``.
    """
    centers = np.asarray(centers, float)
    hs = np.asarray(hs, float)
    n = len(hs)
    idx = monomial_index(p)
    nm = n_monomials(p)
    seeds = [(j, 0) for j in range(p + 1)] + [(j, 1) for j in range(p)]
    nfree = len(seeds)
    yT = centers[:, 1]
    out = np.zeros((n, nm, nfree + 1))  # last column: particular solution
    for s, jk in enumerate(seeds):
        out[:, idx[jk], s] = 1.0
    if source_taylor is not None:
        F = np.asarray(source_taylor, float)
        scale = lambda m, k: hs ** (m + k + 2) * F[m, k]
    else:
        scale = None
    for k in range(2, p + 1):
        for j in range(p + 1 - k):
            m, nn = j, k - 2
            acc = -(m + 2) * (m + 1) * yT[:, None] * out[:, idx[(m + 2, nn)]]
            if nn >= 1:
                acc = acc - (m + 2) * (m + 1) * hs[:, None] * out[:, idx[(m + 2, nn - 1)]]
            if scale is not None:
                acc[:, -1] += scale(m, nn)
            out[:, idx[(j, k)]] = acc / (k * (k - 1))
    return out[:, :, :nfree], out[:, :, nfree]


def et_coeffs(centers, hs, p: int, points, weights, tol_rank=1e-8, source_values=None):
    """Embedded Trefftz kernel and particular solution via element-wise SVD.

    ``points``/``weights`` are element quadrature rules of shape ``(n, nq, 2)``
    and ``(n, nq)``; ``source_values`` is ``f`` at those points.
    """
    n = len(hs)
    Cp = _orthonormalize(standard_coeffs(n, p), centers, hs, p, points, weights)
    Cq = _orthonormalize(standard_coeffs(n, p - 2), centers, hs, p - 2, points, weights)
    xi, eta = _scaled(points, centers, hs)
    Tp = monomial_table(xi, eta, hs, p, ("xx", "yy"))
    LPhi = apply_operator(Tp, points[..., 1]) @ Cp  # (n, nq, Np)
    Psi = monomial_table(xi, eta, hs, p - 2, ("v",))["v"] @ Cq  # (n, nq, Nq)
    B = np.einsum("eq,eqi,eqj->eij", weights, Psi, LPhi)
    U, S, Vt = np.linalg.svd(B, full_matrices=True)
    m = B.shape[1]
    rank = (S > tol_rank * S[:, :1]).sum(axis=1)
    kernel_dim = B.shape[2] - rank
    bad = np.flatnonzero(kernel_dim != 2 * p + 1)
    if len(bad):
        raise RankError(
            f"embedded Trefftz kernel has dimension {int(kernel_dim[bad[0]])} != {2 * p + 1} "
            f"on element batch index {int(bad[0])} (p={p})")
    basis = Cp @ np.swapaxes(Vt[:, m:, :], 1, 2)
    part = np.zeros((n, Cp.shape[1]))
    if source_values is not None:
        mom = np.einsum("eq,eqi,eq->ei", weights, Psi, source_values)
        y = np.einsum("eij,ei->ej", U, mom) / S
        part = np.einsum("emk,ek->em", Cp, np.einsum("eki,ek->ei", Vt[:, :m, :], y))
    return basis, part


# ----------------------------------------------------------------------
def default_order(p: int) -> int:
    return 2 * p + 3


class DiscreteSpace:
    """Global broken space: one :class:`ElementBasis`-like block per element.

    All elements share the local dimension ``dim``; global dofs of element
    ``e`` are ``e * dim + arange(dim)``.
    """

    def __init__(self, mesh: Mesh, config: SpaceConfig, problem=None, order: int | None = None):
        self.mesh = mesh
        self.config = config
        self.p = config.p
        self.order = order or default_order(config.p)
        self.centers = mesh.centroids()
        self.hs = mesh.h_T.copy()
        nE = mesh.n_elements
        nm = n_monomials(self.p)
        dim = config.local_dim()
        self.coeffs = np.zeros((nE, nm, dim))
        offsets = np.zeros((nE, nm))
        kind = config.kind
        for batch in element_batches(mesh, self.order):
            ids = batch.ids
            c, h = self.centers[ids], self.hs[ids]
            if kind is SpaceKind.STANDARD:
                C = standard_coeffs(len(ids), self.p)
                if config.ortho:
                    C = _orthonormalize(C, c, h, self.p, batch.points, batch.weights)
            elif kind is SpaceKind.QUASI_TREFFTZ:
                ft = None
                if problem is not None:
                    ft = problem.source_taylor(c[:, 0], c[:, 1], self.p - 2)
                C, off = qt_coeffs(c, h, self.p, ft)
                offsets[ids] = off
                if config.ortho:
                    C = _orthonormalize(C, c, h, self.p, batch.points, batch.weights)
            else:
                fv = None
                if problem is not None:
                    fv = problem.source(batch.points[..., 0], batch.points[..., 1])
                C, off = et_coeffs(c, h, self.p, batch.points, batch.weights, config.tol_rank, fv)
                offsets[ids] = off
            self.coeffs[ids] = C
        self.offsets = offsets if (problem is not None and kind is not SpaceKind.STANDARD) else None

    @property
    def dim(self) -> int:
        return self.coeffs.shape[2]

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_elements * self.dim

    def dofs(self, ids) -> np.ndarray:
        ids = np.asarray(ids)
        return ids[..., None] * self.dim + np.arange(self.dim)

    def element_basis(self, e: int) -> ElementBasis:
        off = None if self.offsets is None else self.offsets[e]
        return ElementBasis(int(e), self.centers[e], float(self.hs[e]), self.p, self.coeffs[e], off)

    def tables(self, ids, points, derivs=DERIVS) -> dict:
        """Monomial tables for elements ``ids`` at ``points`` of shape ``(n, nq, 2)``."""
        xi, eta = _scaled(points, self.centers[ids], self.hs[ids])
        return monomial_table(xi, eta, self.hs[ids], self.p, derivs)

    def eval(self, ids, points, derivs=DERIVS, with_offset=False) -> dict:
        """Basis values ``(n, nq, dim)``; with ``with_offset`` the particular
        solution is appended as an extra last function."""
        T = self.tables(ids, points, derivs)
        C = self.coeffs[ids]
        if with_offset:
            off = np.zeros(C.shape[:2]) if self.offsets is None else self.offsets[ids]
            C = np.concatenate([C, off[..., None]], axis=2)
        return {k: np.einsum("eqm,emi->eqi", v, C) for k, v in T.items()}


def _one_element(mesh: Mesh, e: int, order: int):
    q = element_rule(mesh, int(e), order)
    return (mesh.centroids()[e][None], np.array([float(mesh.h_T[e])]),
            q.points[None], q.weights[None])


def standard_basis(mesh: Mesh, e: int, p: int, orthonormalize: bool = False,
                   order: int | None = None) -> ElementBasis:
    c, h, pts, w = _one_element(mesh, e, order or default_order(p))
    C = standard_coeffs(1, p)
    if orthonormalize:
        C = _orthonormalize(C, c, h, p, pts, w)
    return ElementBasis(int(e), c[0], float(h[0]), p, C[0])


def qt_basis(mesh: Mesh, e: int, p: int, center=None) -> ElementBasis:
    """Homogeneous quasi-Trefftz basis (``2p + 1`` functions) on element ``e``."""
    c = mesh.centroids()[e] if center is None else np.asarray(center, float)
    h = float(mesh.h_T[e])
    C, _ = qt_coeffs(c[None], np.array([h]), p)
    return ElementBasis(int(e), c, h, p, C[0])


def qt_particular(mesh: Mesh, e: int, p: int, problem, center=None) -> np.ndarray:
    """Monomial coefficients of the quasi-Trefftz particular solution."""
    c = mesh.centroids()[e] if center is None else np.asarray(center, float)
    h = float(mesh.h_T[e])
    ft = problem.source_taylor(np.array([c[0]]), np.array([c[1]]), p - 2)
    _, part = qt_coeffs(c[None], np.array([h]), p, ft)
    return part[0]


def et_basis(mesh: Mesh, e: int, p: int, problem=None, order: int | None = None,
             tol_rank: float = 1e-8) -> ElementBasis:
    """Embedded Trefftz kernel basis and particular solution on element ``e``."""
    c, h, pts, w = _one_element(mesh, e, order or default_order(p))
    fv = None if problem is None else problem.source(pts[..., 0], pts[..., 1])
    C, off = et_coeffs(c, h, p, pts, w, tol_rank, fv)
    return ElementBasis(int(e), c[0], float(h[0]), p, C[0], off[0])

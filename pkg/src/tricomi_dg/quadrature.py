"""Quadrature on straight and curved triangles and on facets.

Triangles use the collapsed (Duffy) map from a vertex ``C`` to the opposite
edge, ``F(s, r) = C + r (gamma(s) - C)``, with a Gauss tensor rule in
``(s, r)``.  For a straight triangle ``gamma`` is the edge itself; for a
curved triangle ``gamma`` is the exact characteristic arc, so the same code
is a transfinite map that degenerates to the affine one for a flat arc.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .geometry import Arc
from .mesh import FacetClass, Mesh, facet_normal

MAX_ORDER = 60


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (n, 2) physical coordinates
    weights: np.ndarray  # (n,)

    def integrate(self, f) -> float:
        vals = f(self.points[:, 0], self.points[:, 1])
        return float(np.sum(self.weights * vals))


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _npts(degree: int) -> int:
    return max(1, (degree + 2) // 2)


def _check_order(order):
    if int(order) != order or order < 1 or order > MAX_ORDER:
        raise QuadratureError(f"unsupported quadrature order {order!r}")


def collapsed_reference(order: int):
    """Collapsed tensor points ``(s, r)`` and weights including the factor ``r``."""
    _check_order(order)
    s, ws = gauss_legendre(_npts(order))
    r, wr = gauss_legendre(_npts(order + 1))
    S, R = np.meshgrid(s, r, indexing="ij")
    W = np.outer(ws, wr) * R
    return S.ravel(), R.ravel(), W.ravel()


def triangle_rule(vertices, order: int) -> QuadRule:
    """Rule exact for polynomials of total degree ``order`` on a straight triangle."""
    P = np.asarray(vertices, dtype=float)
    s, r, w = collapsed_reference(order)
    A, B, C = P
    g = A[None] + s[:, None] * (B - A)[None]
    pts = C[None] + r[:, None] * (g - C[None])
    det = abs((B - A)[0] * (A - C)[1] - (B - A)[1] * (A - C)[0])
    if det == 0.0:
        raise QuadratureError("degenerate triangle")
    return QuadRule(pts, w * det)


def _curved_points(apex, arc: Arc, order: int):
    """Points, weights and signed Jacobians of the ray map on a curved triangle."""
    _check_order(order)
    # curve is cubic in t, Jacobian quartic: degree 3 q + 4 in s
    s, ws = gauss_legendre(_npts(3 * order + 4))
    r, wr = gauss_legendre(_npts(order + 1))
    g, dg = arc.at_fraction(s)
    C = np.asarray(apex, dtype=float)
    jac = (g[:, 0] - C[0]) * dg[:, 1] - (g[:, 1] - C[1]) * dg[:, 0]
    pts = C[None, None] + r[None, :, None] * (g[:, None, :] - C[None, None])
    W = np.outer(ws * jac, wr * r)
    return pts.reshape(-1, 2), W.ravel(), jac


def curved_triangle_rule(apex, arc: Arc, order: int) -> QuadRule:
    """Rule on the triangle bounded by ``arc`` and the two chords to ``apex``."""
    pts, W, jac = _curved_points(apex, arc, order)
    sgn = np.sign(jac)
    if np.any(sgn == 0) or np.any(sgn != sgn[0]):
        raise QuadratureError("inverted curved element (Jacobian changes sign)")
    return QuadRule(pts, W * sgn[0])


def segment_rule(a, b, order: int) -> QuadRule:
    _check_order(order)
    a, b = np.asarray(a, float), np.asarray(b, float)
    x, w = gauss_legendre(_npts(order))
    return QuadRule(a[None] + x[:, None] * (b - a)[None], w * np.linalg.norm(b - a))


def arc_rule(arc: Arc, order: int):
    """Rule on an arc; returns ``(QuadRule, t)`` with the arc parameters of the points."""
    _check_order(order)
    x, w = gauss_legendre(_npts(3 * order + 2))
    t = arc.t0 + x * (arc.t1 - arc.t0)
    speed = np.linalg.norm(arc.tangent(t), axis=-1) * abs(arc.t1 - arc.t0)
    return QuadRule(arc.point(t), w * speed), t


def facet_rule(mesh: Mesh, f: int, order: int) -> QuadRule:
    if mesh.facet_curved[f]:
        return arc_rule(mesh.arc(f), order)[0]
    a, b = mesh.vertices[mesh.facet_vertices[f]]
    return segment_rule(a, b, order)


def element_rule(mesh: Mesh, e: int, order: int) -> QuadRule:
    P, arc, apex = mesh.element_geometry(e)
    if arc is None:
        return triangle_rule(P, order)
    return curved_triangle_rule(apex, arc, order)


# ----------------------------------------------------------------------
# batched rules used by assembly
@dataclass(frozen=True)
class ElementBatch:
    ids: np.ndarray  # (n,)
    points: np.ndarray  # (n, nq, 2)
    weights: np.ndarray  # (n, nq)


@dataclass(frozen=True)
class FacetBatch:
    ids: np.ndarray  # (n,)
    elements: np.ndarray  # (n, 2)
    points: np.ndarray  # (n, nq, 2)
    weights: np.ndarray  # (n, nq), arc length included
    normals: np.ndarray  # (n, nq, 2), outward from elements[:, 0]
    h: np.ndarray  # (n,)


def element_batches(mesh: Mesh, order: int) -> list[ElementBatch]:
    """Straight elements in one batch, curved elements in a second."""
    out = []
    straight = np.flatnonzero(mesh.element_arc < 0)
    if len(straight):
        s, r, w = collapsed_reference(order)
        P = mesh.vertices[mesh.elements[straight]]
        A, B, C = P[:, 0], P[:, 1], P[:, 2]
        g = A[:, None] + s[None, :, None] * (B - A)[:, None]
        pts = C[:, None] + r[None, :, None] * (g - C[:, None])
        det = np.abs((B - A)[:, 0] * (A - C)[:, 1] - (B - A)[:, 1] * (A - C)[:, 0])
        out.append(ElementBatch(straight, pts, det[:, None] * w[None]))
    curved = np.flatnonzero(mesh.element_arc >= 0)
    if len(curved):
        rules = [element_rule(mesh, int(e), order) for e in curved]
        out.append(ElementBatch(curved, np.stack([q.points for q in rules]),
                                np.stack([q.weights for q in rules])))
    return out


def facet_batches(mesh: Mesh, order: int) -> dict[FacetClass, FacetBatch]:
    out = {}
    for cls in FacetClass:
        ids = mesh.facets_of_class(cls)
        if len(ids) == 0:
            continue
        if cls in (FacetClass.GAMMA1, FacetClass.GAMMA2):
            pts, wts, nrm = [], [], []
            for f in ids:
                arc = mesh.arc(int(f))
                q, t = arc_rule(arc, order)
                pts.append(q.points)
                wts.append(q.weights)
                nrm.append(arc.normal(t))
            pts, wts, nrm = np.stack(pts), np.stack(wts), np.stack(nrm)
        else:
            x, w = gauss_legendre(_npts(order))
            a = mesh.vertices[mesh.facet_vertices[ids, 0]]
            b = mesh.vertices[mesh.facet_vertices[ids, 1]]
            pts = a[:, None] + x[None, :, None] * (b - a)[:, None]
            wts = mesh.h_F[ids][:, None] * w[None]
            n = np.stack([facet_normal(mesh, int(f)) for f in ids])
            nrm = np.broadcast_to(n[:, None, :], pts.shape).copy()
        out[cls] = FacetBatch(ids, mesh.facet_elements[ids], pts, wts, nrm, mesh.h_F[ids])
    return out

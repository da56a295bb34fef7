"""Mesh-dependent norms and L2 errors.

Every routine accepts a *field*: any object with
``eval(ids, points, derivs) -> {name: (n, nq)}`` and a ``space`` attribute,
such as :class:`~tricomi_dg.assembly.SolutionField`.  Errors against a smooth
reference are measured by passing ``ErrorField(exact, u_h)``; its traces on
Dirichlet facets are then ``g - u_h`` and ``g_t - (u_h)_t``, and its interior
jumps are those of ``-u_h``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .assembly import PenaltyConfig
from .mesh import FacetClass
from .morawetz import Morawetz, validate
from .quadrature import element_batches, facet_batches, triangle_rule
from .spaces import DERIVS


class Region(enum.Enum):
    ALL = "all"
    ELLIPTIC = "elliptic"
    HYPERBOLIC = "hyperbolic"


class ExactField:
    """Adapter evaluating an exact solution like a discrete field."""

    def __init__(self, exact, space):
        self.exact = exact
        self.space = space

    def eval(self, ids, points, derivs=DERIVS) -> dict:
        d = self.exact.derivatives(points[..., 0], points[..., 1])
        return {k: np.broadcast_to(d[k], points.shape[:-1]) for k in derivs}


class ErrorField:
    """``exact - field`` evaluated elementwise."""

    def __init__(self, exact, field):
        self.exact = ExactField(exact, field.space)
        self.field = field
        self.space = field.space

    def eval(self, ids, points, derivs=DERIVS) -> dict:
        a = self.exact.eval(ids, points, derivs)
        b = self.field.eval(ids, points, derivs)
        return {k: a[k] - b[k] for k in derivs}


def _order(field, order):
    return order or field.space.order


# ----------------------------------------------------------------------
def gradient_norm_sq(field, order: int | None = None) -> float:
    """``sum_T int_T |grad v|^2``."""
    total = 0.0
    for b in element_batches(field.space.mesh, _order(field, order)):
        V = field.eval(b.ids, b.points, ("x", "y"))
        total += float(np.sum(b.weights * (V["x"] ** 2 + V["y"] ** 2)))
    return total


def operator_norm_sq(field, order: int | None = None) -> float:
    """``sum_T int_T (K v_xx + v_yy)^2``."""
    total = 0.0
    for b in element_batches(field.space.mesh, _order(field, order)):
        V = field.eval(b.ids, b.points, ("xx", "yy"))
        L = b.points[..., 1] * V["xx"] + V["yy"]
        total += float(np.sum(b.weights * L ** 2))
    return total


def jump_parts(field, order: int | None = None) -> tuple[float, float, float]:
    """Unit-penalty sums ``(S1, S2, S3)`` with ``|v|_J^2 = g1 S1 + g2 S2 + g3 S3``."""
    p2 = field.space.p ** 2
    s1 = s2 = s3 = 0.0
    for cls, fb in facet_batches(field.space.mesh, _order(field, order)).items():
        A = field.eval(fb.elements[:, 0], fb.points, ("v", "x", "y"))
        h = fb.h[:, None]
        if cls is FacetClass.INTERIOR:
            B = field.eval(fb.elements[:, 1], fb.points, ("v", "x", "y"))
            s1 += float(np.sum(fb.weights / h ** 3 * (A["v"] - B["v"]) ** 2))
            s2 += float(np.sum(p2 * fb.weights / h * ((A["x"] - B["x"]) ** 2 + (A["y"] - B["y"]) ** 2)))
        elif cls.dirichlet:
            n = fb.normals
            vt = -n[..., 1] * A["x"] + n[..., 0] * A["y"]
            s1 += float(np.sum(fb.weights / h ** 3 * A["v"] ** 2))
            s3 += float(np.sum(p2 * fb.weights / h * vt ** 2))
    return s1, s2, s3


def jump_seminorm(field, penalties: PenaltyConfig | None = None, order: int | None = None) -> float:
    pen = penalties or PenaltyConfig()
    s1, s2, s3 = jump_parts(field, order)
    return float(np.sqrt(pen.gamma1 * s1 + pen.gamma2 * s2 + pen.gamma3 * s3))


def energy_norm(field, m: Morawetz | None = None, penalties: PenaltyConfig | None = None,
                order: int | None = None, delta: float | None = None) -> float:
    """``sqrt(delta sum_T |grad v|^2 + |v|_J^2)``."""
    if delta is None:
        delta = validate(m or Morawetz(), field.space.mesh.spec).delta
    j = jump_seminorm(field, penalties, order)
    return float(np.sqrt(delta * gradient_norm_sq(field, order) + j ** 2))


def residual_norm(field, penalties: PenaltyConfig | None = None, order: int | None = None) -> float:
    """``sqrt(sum_T ||L v||^2 + |v|_J^2)``; for an :class:`ErrorField` ``L e = f - L u_h``."""
    j = jump_seminorm(field, penalties, order)
    return float(np.sqrt(operator_norm_sq(field, order) + j ** 2))


# ----------------------------------------------------------------------
def _clip_upper(P):
    """Polygon ``P`` intersected with ``{y >= 0}`` (Sutherland-Hodgman, one edge)."""
    out = []
    n = len(P)
    for i in range(n):
        a, b = P[i], P[(i + 1) % n]
        ina, inb = a[1] >= 0, b[1] >= 0
        if ina:
            out.append(a)
        if ina != inb:
            t = a[1] / (a[1] - b[1])
            out.append(a + t * (b - a))
    return np.array(out)


def _fan(poly):
    return [np.array([poly[0], poly[i], poly[i + 1]]) for i in range(1, len(poly) - 1)]


def _element_sides(mesh):
    """+1 elliptic, -1 hyperbolic, 0 straddling, by vertex ordinates."""
    y = mesh.vertices[mesh.elements][..., 1]
    side = np.zeros(mesh.n_elements, dtype=int)
    side[(y >= 0).all(axis=1)] = 1
    side[(y <= 0).all(axis=1) & ~(y >= 0).all(axis=1)] = -1
    # curved elements never straddle; classify by centroid if the vertices disagree
    cur = (mesh.element_arc >= 0) & (side == 0)
    side[cur] = np.where(mesh.centroids()[cur, 1] > 0, 1, -1)
    return side


def l2_error(field, reference=None, region: Region | str = Region.ALL, order: int | None = None) -> float:
    """``||reference - field||_{L2(region)}``; ``reference=None`` measures ``field`` itself."""
    region = Region(region) if not isinstance(region, Region) else region
    mesh = field.space.mesh
    order = _order(field, order)
    side = _element_sides(mesh)

    def values(ids, pts):
        v = field.eval(ids, pts, ("v",))["v"]
        if reference is not None:
            v = reference(pts[..., 0], pts[..., 1]) - v
        return v

    total = 0.0
    for b in element_batches(mesh, order):
        s = side[b.ids]
        if region is Region.ALL:
            keep = np.ones(len(b.ids), bool)
        elif region is Region.ELLIPTIC:
            keep = s == 1
        else:
            keep = s == -1
        if keep.any():
            v = values(b.ids[keep], b.points[keep])
            total += float(np.sum(b.weights[keep] * v ** 2))
        if region is not Region.ALL:
            for k in np.flatnonzero(s == 0):
                e = int(b.ids[k])
                P = mesh.vertices[mesh.elements[e]]
                poly = _clip_upper(P) if region is Region.ELLIPTIC else _clip_upper(P * [1, -1]) * [1, -1]
                for tri in _fan(poly):
                    u, w = tri[1] - tri[0], tri[2] - tri[0]
                    if abs(u[0] * w[1] - u[1] * w[0]) < 1e-300:
                        continue
                    q = triangle_rule(tri, order)
                    v = values(np.array([e]), q.points[None])
                    total += float(np.sum(q.weights * v[0] ** 2))
    return float(np.sqrt(total))


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ErrorReport:
    energy: float
    jump_seminorm: float
    residual_norm: float
    l2_total: float
    l2_elliptic: float
    l2_hyperbolic: float
    n_dofs: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def error_report(field, exact, m: Morawetz | None = None, penalties: PenaltyConfig | None = None,
                 order: int | None = None) -> ErrorReport:
    m = m or Morawetz()
    err = ErrorField(exact, field)
    delta = validate(m, field.space.mesh.spec).delta
    pen = penalties or PenaltyConfig()
    s1, s2, s3 = jump_parts(err, order)
    j2 = pen.gamma1 * s1 + pen.gamma2 * s2 + pen.gamma3 * s3
    g2 = gradient_norm_sq(err, order)
    r2 = operator_norm_sq(err, order)
    return ErrorReport(
        energy=float(np.sqrt(delta * g2 + j2)),
        jump_seminorm=float(np.sqrt(j2)),
        residual_norm=float(np.sqrt(r2 + j2)),
        l2_total=l2_error(field, exact, Region.ALL, order),
        l2_elliptic=l2_error(field, exact, Region.ELLIPTIC, order),
        l2_hyperbolic=l2_error(field, exact, Region.HYPERBOLIC, order),
        n_dofs=int(field.space.n_dofs),
    )

"""Triangular meshes of the Tricomi domain.

Meshes are built from vertex coordinates, element connectivity and a list of
tagged boundary edges; interior facets are inferred.  Facets on the two
characteristics are curved and carry the exact arc between their endpoints.

Text format (``tricomi-mesh v1``)::

    tricomi-mesh v1
    VERTICES
    <n>
    x y
    ...
    ELEMENTS
    <n>
    i j k
    ...
    BOUNDARY
    <n>
    i j gamma0|gamma1|gamma2
    ...
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    Arc,
    DomainSpec,
    Side,
    characteristic_point,
    on_boundary,
)

HEADER = "tricomi-mesh v1"


class MeshError(ValueError):
    pass


class FacetClass(enum.IntEnum):
    INTERIOR = 0
    GAMMA0 = 1
    GAMMA1 = 2
    GAMMA2 = 3

    @property
    def side(self) -> Side:
        return {1: Side.GAMMA0, 2: Side.GAMMA1, 3: Side.GAMMA2}[int(self)]

    @property
    def dirichlet(self) -> bool:
        return self in (FacetClass.GAMMA0, FacetClass.GAMMA1)


_TAGS = {"gamma0": FacetClass.GAMMA0, "gamma1": FacetClass.GAMMA1, "gamma2": FacetClass.GAMMA2}


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Mesh:
    """Immutable triangular mesh with classified facets.

    Attributes
    ----------
    vertices : (nV, 2) float
    elements : (nE, 3) int, counter-clockwise
    facet_vertices : (nF, 2) int
    facet_elements : (nF, 2) int, second entry -1 on boundary facets
    facet_class : (nF,) int, values of :class:`FacetClass`
    h_T, h_F : element and facet diameters (chord based)
    element_arc : (nE,) int, index of the element's curved facet or -1
    """

    def __init__(self, vertices, elements, boundary, spec: DomainSpec | None = None):
        self.spec = spec or DomainSpec()
        V = np.asarray(vertices, dtype=float).reshape(-1, 2)
        E = np.asarray(elements, dtype=int).reshape(-1, 3).copy()
        if len(E) == 0:
            raise MeshError("mesh has no elements")
        if E.min() < 0 or E.max() >= len(V):
            raise MeshError("element references a missing vertex")
        used = np.zeros(len(V), dtype=bool)
        used[E.ravel()] = True
        if not used.all():
            raise MeshError(f"dangling vertex {int(np.flatnonzero(~used)[0])}")
        P = V[E]
        area2 = (P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1]) - (
            P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0])
        if np.any(np.abs(area2) <= 1e-300):
            raise MeshError(f"degenerate element {int(np.flatnonzero(np.abs(area2) <= 1e-300)[0])}")
        flip = area2 < 0
        E[flip] = E[flip][:, [0, 2, 1]]

        tags = {}
        for a, b, tag in boundary:
            key = (min(int(a), int(b)), max(int(a), int(b)))
            cls = tag if isinstance(tag, FacetClass) else _TAGS.get(str(tag).lower())
            if cls is None or cls is FacetClass.INTERIOR:
                raise MeshError(f"bad boundary tag {tag!r}")
            tags[key] = cls

        owners: dict[tuple[int, int], list[int]] = {}
        for e, tri in enumerate(E):
            for i in range(3):
                a, b = int(tri[i]), int(tri[(i + 1) % 3])
                owners.setdefault((min(a, b), max(a, b)), []).append(e)

        facets = []  # (class, a, b, e0, e1)
        unmatched = []
        for key, els in owners.items():
            if len(els) > 2:
                raise MeshError(f"non-manifold facet {key} shared by {len(els)} elements")
            if len(els) == 2:
                if key in tags:
                    raise MeshError(f"boundary tag on interior facet {key}")
                facets.append((FacetClass.INTERIOR, key[0], key[1], min(els), max(els)))
            elif key in tags:
                facets.append((tags.pop(key), key[0], key[1], els[0], -1))
            else:
                unmatched.append((key, els[0]))
        if tags:
            raise MeshError(f"boundary tag on non-existent edge {next(iter(tags))}")
        facets.extend(_match_hanging(V, unmatched))

        facets.sort(key=lambda f: (int(f[0]), f[1], f[2]))
        F = np.array([f[1:3] for f in facets], dtype=int)
        FE = np.array([f[3:5] for f in facets], dtype=int)
        FC = np.array([int(f[0]) for f in facets], dtype=int)

        self.vertices = _frozen(V, float)
        self.elements = _frozen(E, int)
        self.facet_vertices = _frozen(F, int)
        self.facet_elements = _frozen(FE, int)
        self.facet_class = _frozen(FC, int)
        self.facet_curved = _frozen(np.isin(FC, [FacetClass.GAMMA1, FacetClass.GAMMA2]), bool)
        self._check_boundary()

        P = self.vertices[self.elements]
        d = np.stack([np.linalg.norm(P[:, i] - P[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))], 1)
        self.h_T = _frozen(d.max(axis=1), float)
        self.h_F = _frozen(np.linalg.norm(self.vertices[F[:, 0]] - self.vertices[F[:, 1]], axis=1), float)

        arc = -np.ones(len(E), dtype=int)
        for f in np.flatnonzero(self.facet_curved):
            e = FE[f, 0]
            if arc[e] >= 0:
                raise MeshError(f"element {e} has more than one curved facet")
            arc[e] = f
        self.element_arc = _frozen(arc, int)

    # ------------------------------------------------------------------
    def _check_boundary(self):
        for f in np.flatnonzero(self.facet_class != FacetClass.INTERIOR):
            cls = FacetClass(int(self.facet_class[f]))
            for v in self.facet_vertices[f]:
                if not on_boundary(cls.side, self.vertices[v], self.spec):
                    raise MeshError(
                        f"vertex {int(v)} of {cls.side.value} facet {int(f)} is off the boundary")

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_facets(self) -> int:
        return len(self.facet_vertices)

    @property
    def h(self) -> float:
        return float(self.h_T.max())

    def facets_of_class(self, *classes) -> np.ndarray:
        return np.flatnonzero(np.isin(self.facet_class, [int(c) for c in classes]))

    def boundary_edges(self):
        out = []
        for f in self.facets_of_class(FacetClass.GAMMA0, FacetClass.GAMMA1, FacetClass.GAMMA2):
            out.append((int(self.facet_vertices[f, 0]), int(self.facet_vertices[f, 1]),
                        FacetClass(int(self.facet_class[f]))))
        return out

    def arc(self, f: int) -> Arc:
        """Exact arc of curved facet ``f``, oriented from its first to second vertex."""
        if not self.facet_curved[f]:
            raise MeshError(f"facet {f} is straight")
        side = FacetClass(int(self.facet_class[f])).side
        a, b = self.vertices[self.facet_vertices[f]]
        return Arc(side, float(np.sqrt(max(-a[1], 0.0))), float(np.sqrt(max(-b[1], 0.0))))

    def element_geometry(self, e: int):
        """``(vertices, arc, apex)`` with ``apex`` the vertex opposite the arc (or None)."""
        P = self.vertices[self.elements[e]]
        f = self.element_arc[e]
        if f < 0:
            return P, None, None
        a, b = self.facet_vertices[f]
        apex = [v for v in self.elements[e] if v not in (a, b)][0]
        return P, self.arc(int(f)), self.vertices[apex]

    def element_areas_straight(self) -> np.ndarray:
        P = self.vertices[self.elements]
        return 0.5 * ((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                      - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))

    def centroids(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.elements, other.elements)
                and np.array_equal(self.facet_vertices, other.facet_vertices)
                and np.array_equal(self.facet_elements, other.facet_elements)
                and np.array_equal(self.facet_class, other.facet_class)
                and self.spec == other.spec)

    __hash__ = None

    def __repr__(self):
        counts = np.bincount(self.facet_class, minlength=4)
        return (f"Mesh(nV={len(self.vertices)}, nE={self.n_elements}, facets="
                f"{dict(zip(('I', 'G0', 'G1', 'G2'), counts.tolist()))}, h={self.h:.4g})")


def _match_hanging(V, unmatched):
    """Pair untagged open edges lying on a longer open edge (hanging nodes)."""
    if not unmatched:
        return []
    facets = []
    used = set()
    for i, ((a, b), e) in enumerate(unmatched):
        if i in used:
            continue
        pa, pb = V[a], V[b]
        L = np.linalg.norm(pb - pa)
        u = (pb - pa) / L
        subs = []
        for j, ((c, d), e2) in enumerate(unmatched):
            if j == i or j in used or e2 == e:
                continue
            ok = True
            for q in (V[c], V[d]):
                w = q - pa
                if abs(u[0] * w[1] - u[1] * w[0]) > 1e-12 * L or not (-1e-12 * L <= w @ u <= L * (1 + 1e-12)):
                    ok = False
            if ok:
                subs.append(j)
        if not subs:
            continue
        if abs(sum(np.linalg.norm(V[unmatched[j][0][1]] - V[unmatched[j][0][0]]) for j in subs) - L) > 1e-12 * L:
            raise MeshError(f"hanging edge {(a, b)} not covered by its sub-edges")
        used.add(i)
        for j in subs:
            used.add(j)
            (c, d), e2 = unmatched[j]
            facets.append((FacetClass.INTERIOR, c, d, min(e, e2), max(e, e2)))
    rest = [unmatched[i][0] for i in range(len(unmatched)) if i not in used]
    if rest:
        raise MeshError(f"boundary facet {rest[0]} has no tag")
    return facets


# ----------------------------------------------------------------------
def builtin_coarse_mesh(spec: DomainSpec | None = None) -> Mesh:
    """Four triangles meeting at the origin."""
    spec = spec or DomainSpec()
    V = [(-1.0, 0.0), (1.0, 0.0), (0.0, spec.d), (0.0, spec.y_c), (0.0, 0.0)]
    E = [(0, 4, 2), (4, 1, 2), (0, 3, 4), (3, 1, 4)]
    B = [(0, 2, "gamma0"), (2, 1, "gamma0"), (0, 3, "gamma1"), (3, 1, "gamma2")]
    return Mesh(V, E, B, spec)


def refine(mesh: Mesh) -> Mesh:
    """Red refinement; midpoints of characteristic facets are snapped onto the curve."""
    V = [tuple(v) for v in mesh.vertices]
    mid: dict[tuple[int, int], int] = {}
    snap = {}
    for f in np.flatnonzero(mesh.facet_curved):
        a, b = (int(v) for v in mesh.facet_vertices[f])
        ym = 0.5 * (mesh.vertices[a, 1] + mesh.vertices[b, 1])
        snap[(min(a, b), max(a, b))] = tuple(
            characteristic_point(FacetClass(int(mesh.facet_class[f])).side, np.sqrt(-ym)))

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in mid:
            p = snap.get(key)
            if p is None:
                p = tuple(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
            mid[key] = len(V)
            V.append(p)
        return mid[key]

    E = []
    for a, b, c in mesh.elements:
        a, b, c = int(a), int(b), int(c)
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        E += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    B = []
    for a, b, cls in mesh.boundary_edges():
        m = mid[(min(a, b), max(a, b))]
        B += [(a, m, cls), (m, b, cls)]
    return Mesh(np.array(V), E, B, mesh.spec)


def build_mesh(spec: DomainSpec | None = None, level: int = 0) -> Mesh:
    m = builtin_coarse_mesh(spec)
    for _ in range(level):
        m = refine(m)
    return m


# ----------------------------------------------------------------------
def save_mesh(mesh: Mesh, path) -> None:
    lines = [HEADER, "VERTICES", str(len(mesh.vertices))]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += ["ELEMENTS", str(mesh.n_elements)]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.elements]
    bnd = mesh.boundary_edges()
    lines += ["BOUNDARY", str(len(bnd))]
    lines += [f"{a} {b} {cls.side.value}" for a, b, cls in bnd]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path, spec: DomainSpec | None = None) -> Mesh:
    raw = [ln.split("#")[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in raw if ln]
    if not lines or lines[0] != HEADER:
        raise MeshError(f"{path}: missing header {HEADER!r}")
    pos = 1

    def section(name, width, conv):
        nonlocal pos
        if pos >= len(lines) or lines[pos].upper() != name:
            raise MeshError(f"{path}: expected section {name}")
        try:
            n = int(lines[pos + 1])
            rows = [lines[pos + 2 + i].split() for i in range(n)]
        except (IndexError, ValueError) as exc:
            raise MeshError(f"{path}: malformed {name} section") from exc
        pos += 2 + n
        out = []
        for r in rows:
            if len(r) != width:
                raise MeshError(f"{path}: {name} row {r} has {len(r)} fields, expected {width}")
            try:
                out.append(conv(r))
            except ValueError as exc:
                raise MeshError(f"{path}: bad {name} row {r}") from exc
        return out

    V = section("VERTICES", 2, lambda r: (float(r[0]), float(r[1])))
    E = section("ELEMENTS", 3, lambda r: tuple(int(x) for x in r))
    B = section("BOUNDARY", 3, lambda r: (int(r[0]), int(r[1]), r[2]))
    if pos != len(lines):
        raise MeshError(f"{path}: trailing content")
    for a, b, tag in B:
        if tag.lower() not in _TAGS:
            raise MeshError(f"{path}: unknown boundary tag {tag!r}")
    return Mesh(V, E, B, spec)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class MeshQualityReport:
    r_star: float
    C_g: float
    C_tr: float


def inradius_ratio(P) -> np.ndarray:
    """Inradius over diameter of triangles ``P`` with shape ``(..., 3, 2)``."""
    P = np.asarray(P, float)
    e1, e2 = P[..., 1, :] - P[..., 0, :], P[..., 2, :] - P[..., 0, :]
    area = 0.5 * np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
    sides = np.stack([np.linalg.norm(P[..., i, :] - P[..., j, :], axis=-1)
                      for i, j in ((0, 1), (1, 2), (2, 0))], -1)
    if np.any(area <= 1e-14 * sides.max(axis=-1) ** 2):
        raise MeshError("degenerate element")
    return 2.0 * area / sides.sum(axis=-1) / sides.max(axis=-1)


def quality(mesh: Mesh) -> MeshQualityReport:
    """Star-shapedness ratio, grading constant and discrete trace constant."""
    r_star = float(inradius_ratio(mesh.vertices[mesh.elements]).min())
    ratios = []
    for k in range(2):
        e = mesh.facet_elements[:, k]
        ok = e >= 0
        ratios.append(mesh.h_T[e[ok]] / mesh.h_F[ok])
    C_g = float(np.concatenate(ratios).max())
    return MeshQualityReport(r_star, C_g, float(np.sqrt(6.0 / r_star)))


def facet_normal(mesh: Mesh, f: int, points=None, element: int | None = None):
    """Unit normal of facet ``f``: outward from ``element`` (default ``facet_elements[f, 0]``).

    Straight facets return one vector; curved facets need ``points`` as arc
    parameters ``t`` and return one normal per parameter.
    """
    if mesh.facet_curved[f]:
        arc = mesh.arc(f)
        t = np.asarray([0.5 * (arc.t0 + arc.t1)] if points is None else points, dtype=float)
        return arc.normal(t)
    a, b = mesh.vertices[mesh.facet_vertices[f]]
    tng = (b - a) / np.linalg.norm(b - a)
    n = np.array([tng[1], -tng[0]])
    e = mesh.facet_elements[f, 0] if element is None else element
    if e not in mesh.facet_elements[f]:
        raise MeshError(f"element {e} is not adjacent to facet {f}")
    if n @ (mesh.vertices[mesh.elements[e]].mean(axis=0) - a) > 0:
        n = -n
    return n


def facet_geometry(mesh: Mesh, f: int) -> dict:
    """Normal, chord length and (for curved facets) the exact arc."""
    out = {"h_F": float(mesh.h_F[f]), "class": FacetClass(int(mesh.facet_class[f])),
           "elements": tuple(int(e) for e in mesh.facet_elements[f])}
    if mesh.facet_curved[f]:
        out["arc"] = mesh.arc(f)
        out["normal"] = None
    else:
        out["arc"] = None
        out["normal"] = facet_normal(mesh, f)
    return out


def quasi_uniformity(mesh: Mesh) -> float:
    """max h_T1 / h_T2 over neighbouring elements."""
    I = mesh.facets_of_class(FacetClass.INTERIOR)
    a, b = mesh.facet_elements[I].T
    r = mesh.h_T[a] / mesh.h_T[b]
    return float(np.maximum(r, 1.0 / r).max())

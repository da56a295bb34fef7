"""Affine Morawetz multipliers ``m = (b(x), c(y))`` and the constants derived from them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainSpec
from .mesh import MeshQualityReport

TOL = 1e-12


@dataclass(frozen=True)
class Morawetz:
    """``b(x) = b0 + b1 x`` and ``c(y) = c0 + c1 y``."""

    b0: float = -2.0
    b1: float = 0.5
    c0: float = 1.0
    c1: float = 0.25

    @classmethod
    def default(cls) -> "Morawetz":
        return cls()

    @classmethod
    def parse(cls, text: str) -> "Morawetz":
        parts = [float(s) for s in str(text).replace(" ", "").split(",")]
        if len(parts) != 4:
            raise ValueError(f"multiplier needs four values b0,b1,c0,c1, got {text!r}")
        return cls(*parts)

    def b(self, x):
        return self.b0 + self.b1 * np.asarray(x, float)

    def c(self, y):
        return self.c0 + self.c1 * np.asarray(y, float)

    def eval(self, point):
        """``(b(x), c(y))`` at a point or an array of points ``(..., 2)``."""
        p = np.asarray(point, float)
        return self.b(p[..., 0]), self.c(p[..., 1])

    def scaled(self, s: float) -> "Morawetz":
        return Morawetz(s * self.b0, s * self.b1, s * self.c0, s * self.c1)

    def as_tuple(self):
        return (self.b0, self.b1, self.c0, self.c1)


@dataclass(frozen=True)
class Validation:
    delta: float
    ok: bool
    violated: list = field(default_factory=list)
    # individual reduced quantities, for reporting
    a2_volume: float = 0.0
    a2_gradient: float = 0.0
    a3_max: float = 0.0
    a4_min: float = 0.0


def _a3_max(m: Morawetz, spec: DomainSpec) -> float:
    """Max over Gamma2 of ``b + c sqrt(-K)`` written in ``s = sqrt(-y)``.

    ``g(s) = b0 + b1 + c0 s - (2/3 b1 + c1) s^3`` on ``[0, t_c]``; the maximum is at
    an endpoint or at the interior stationary point of the cubic.
    """
    a = 2.0 / 3.0 * m.b1 + m.c1
    g = lambda s: m.b0 + m.b1 + m.c0 * s - a * s ** 3
    cands = [0.0, spec.t_c]
    if a != 0 and m.c0 / (3 * a) > 0:
        s = np.sqrt(m.c0 / (3 * a))
        if s < spec.t_c:
            cands.append(s)
    return max(g(s) for s in cands)


def _a4_min(m: Morawetz, spec: DomainSpec) -> float:
    """Min over the roof of ``sqrt(1+d^2) m.n`` (piecewise affine in ``x``)."""
    d = spec.d
    vals = []
    for x, sg in ((-1.0, -1.0), (0.0, -1.0), (0.0, 1.0), (1.0, 1.0)):
        vals.append((m.b0 + m.b1 * x) * d * sg + m.c0 + m.c1 * d * (1 - abs(x)))
    return min(vals)


def validate(m: Morawetz, spec: DomainSpec | None = None) -> Validation:
    """Check positivity in the domain and the sign conditions on Gamma2 and Gamma0."""
    spec = spec or DomainSpec()
    slope = 2 * m.c1 - m.b1  # -K b_x + (K c)_y = (2 c1 - b1) y + c0
    a2v = min(slope * spec.y_c + m.c0, slope * spec.d + m.c0)
    a2g = m.b1 - m.c1
    a3 = _a3_max(m, spec)
    a4 = _a4_min(m, spec)
    violated = []
    if a2v <= 0:
        violated.append("A2: -K b_x + (K c)_y must be positive")
    if a2g <= 0:
        violated.append("A2: b_x - c_y must be positive")
    if a3 > TOL:
        violated.append("A3: b + c sqrt(-K) <= 0 fails on Gamma2")
    if a4 < -TOL:
        violated.append("A4: m.n >= 0 fails on Gamma0")
    delta = min(a2v, a2g)
    return Validation(float(delta), not violated, violated, float(a2v), float(a2g), float(a3), float(a4))


def beta(m: Morawetz, spec: DomainSpec | None = None) -> float:
    """Largest sup-norm of ``K b, b, K c, c`` over ``[-1, 1] x [y_c, d]``."""
    spec = spec or DomainSpec()
    ys = [spec.y_c, spec.d]
    if m.c1 != 0:
        yv = -m.c0 / (2 * m.c1)  # vertex of y c(y)
        if spec.y_c < yv < spec.d:
            ys.append(yv)
    bmax = max(abs(m.b(-1.0)), abs(m.b(1.0)))
    kmax = max(abs(spec.y_c), abs(spec.d))
    cmax = max(abs(m.c(spec.y_c)), abs(m.c(spec.d)))
    kc = max(abs(y * m.c(y)) for y in ys)
    return float(max(kmax * bmax, bmax, kc, cmax))


@dataclass(frozen=True)
class StabilityConstants:
    delta: float
    beta: float
    C_tr: float
    gamma_star: float
    M_cont: float


def constants(m: Morawetz, spec: DomainSpec | None, quality: MeshQualityReport,
              gamma2: float) -> StabilityConstants:
    spec = spec or DomainSpec()
    delta = validate(m, spec).delta
    if delta <= 0:
        raise ValueError("multiplier is not admissible (delta <= 0)")
    b = beta(m, spec)
    ctr = quality.C_tr
    gstar = 288.0 * b ** 2 * ctr ** 2 / delta
    M = np.sqrt(2.0) * b / np.sqrt(delta) * (1.0 + ctr / np.sqrt(gamma2)) + 1.0
    return StabilityConstants(delta, b, ctr, float(gstar), float(M))


def boundary_forms(m: Morawetz, point, normal, K=None) -> dict:
    """Boundary quadratic forms ``Q_n, Q_t, Q_nt`` and the matrix ``M``.

    ``point`` and ``normal`` broadcast over leading axes; ``K`` defaults to
    ``K(y) = y``.  ``M`` has shape ``(..., 2, 2)``.
    """
    p = np.asarray(point, float)
    n = np.asarray(normal, float)
    b, c = m.eval(p)
    K = p[..., 1] if K is None else np.asarray(K, float)
    nx, ny = n[..., 0], n[..., 1]
    tx, ty = -ny, nx
    char = K * nx ** 2 + ny ** 2
    s = b * nx - c * ny
    off = b * ny + K * c * nx
    M = np.stack([np.stack([K * s, off], -1), np.stack([off, -s], -1)], -2)
    Qt = K * s * tx ** 2 + 2 * off * tx * ty - s * ty ** 2
    return {"Q_n": char * (b * nx + c * ny), "Q_nt": char * (b * tx + c * ty), "Q_t": Qt, "M": M}

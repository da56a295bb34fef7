"""Exact geometry of the mixed elliptic-hyperbolic Tricomi domain.

The domain is bounded above by the roof ``y = d - d|x|`` (elliptic boundary
Gamma0) and below by the two characteristics of ``K(y) u_xx + u_yy``
through ``(-1, 0)`` (Gamma1) and ``(1, 0)`` (Gamma2), which meet at
``(0, y_c)``.

For ``K(y) = y`` the characteristics are written here in terms of the
parameter ``t = sqrt(-y)``::

    Gamma1: x = -1 + 2/3 t**3,   y = -t**2
    Gamma2: x =  1 - 2/3 t**3,   y = -t**2

which is polynomial in ``t`` and keeps curved quadrature exact for
polynomial integrands.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TOL = 1e-10


class DomainError(ValueError):
    """Argument outside the range where a geometric map is defined."""


class GeometryError(ValueError):
    """Point or object inconsistent with the domain geometry."""


class Side(enum.Enum):
    GAMMA0 = "gamma0"
    GAMMA1 = "gamma1"
    GAMMA2 = "gamma2"

    @classmethod
    def parse(cls, value: "Side | str") -> "Side":
        if isinstance(value, Side):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class CoefficientK:
    """Type-changing coefficient ``K(y)``; only the Tricomi case ``K(y) = y``."""

    kind: str = "tricomi"

    def __post_init__(self):
        if self.kind != "tricomi":
            raise ValueError(f"unsupported coefficient kind {self.kind!r}")

    def __call__(self, y):
        return np.asarray(y, dtype=float) * 1.0

    def derivative(self, y):
        return np.ones_like(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class DomainSpec:
    d: float = 0.5
    K: CoefficientK = field(default_factory=CoefficientK)

    def __post_init__(self):
        if not self.d > 0:
            raise DomainError(f"roof height d must be positive, got {self.d}")
        if not self.d < (2.0 / 3.0) ** (1.0 / 3.0):
            raise DomainError(
                f"roof height d={self.d} violates d < (2/3)^(1/3) needed for an "
                "admissible affine multiplier")

    @property
    def y_c(self) -> float:
        return -(1.5 ** (2.0 / 3.0))

    @property
    def t_c(self) -> float:
        """Characteristic parameter of the bottom corner, ``sqrt(-y_c)``."""
        return 1.5 ** (1.0 / 3.0)

    @property
    def area(self) -> float:
        """Exact area: hyperbolic part ``int (2 - 4/3 (-y)^{3/2}) dy`` plus roof triangle ``d``."""
        a = -self.y_c
        hyperbolic = 2.0 * a - (4.0 / 3.0) * (2.0 / 5.0) * a ** 2.5
        return hyperbolic + self.d


def _sign(side: Side) -> float:
    return -1.0 if side is Side.GAMMA1 else 1.0


def characteristic_x(side, y, spec: DomainSpec | None = None):
    """x-coordinate of the characteristic ``side`` at height ``y``."""
    side = Side.parse(side)
    if side is Side.GAMMA0:
        raise DomainError("Gamma0 is not a characteristic")
    spec = spec or DomainSpec()
    y = np.asarray(y, dtype=float)
    if np.any(y > 0) or np.any(y < spec.y_c - 1e-14):
        raise DomainError(f"y outside [{spec.y_c}, 0]")
    s = _sign(side)
    out = s * (1.0 - (2.0 / 3.0) * np.clip(-y, 0.0, None) ** 1.5)
    return float(out) if out.ndim == 0 else out


def characteristic_point(side, t):
    """Point on characteristic ``side`` at parameter ``t = sqrt(-y)``."""
    s = _sign(Side.parse(side))
    t = np.asarray(t, dtype=float)
    return np.stack([s * (1.0 - (2.0 / 3.0) * t ** 3), -t ** 2], axis=-1)


def characteristic_tangent(side, t):
    """Derivative of :func:`characteristic_point` with respect to ``t``."""
    s = _sign(Side.parse(side))
    t = np.asarray(t, dtype=float)
    return np.stack([-2.0 * s * t ** 2, -2.0 * t], axis=-1)


def characteristic_normal(side, t):
    """Outward unit normal on a characteristic, ``(+-1, -t) / sqrt(1 + t^2)``."""
    s = _sign(Side.parse(side))
    t = np.asarray(t, dtype=float)
    r = np.sqrt(1.0 + t ** 2)
    return np.stack([s / r, -t / r], axis=-1)


def elliptic_boundary_y(x, d: float):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise DomainError("|x| > 1 is outside the roof")
    out = d - d * np.abs(x)
    return float(out) if out.ndim == 0 else out


def roof_normal(x, d: float):
    x = np.asarray(x, dtype=float)
    s = np.sign(x)
    r = np.sqrt(1.0 + d * d)
    return np.stack([d * s / r, np.ones_like(x) / r], axis=-1)


def boundary_normal(side, point, spec: DomainSpec | None = None):
    """Outward unit normal at ``point`` on boundary piece ``side``."""
    side = Side.parse(side)
    spec = spec or DomainSpec()
    x, y = float(point[0]), float(point[1])
    if side is Side.GAMMA0:
        if abs(x) > 1.0 + BOUNDARY_TOL or abs(y - spec.d * (1.0 - abs(x))) > BOUNDARY_TOL:
            raise GeometryError(f"({x}, {y}) is not on Gamma0")
        if x == 0.0:
            raise GeometryError("normal undefined at the roof apex")
        return roof_normal(x, spec.d)
    if y > BOUNDARY_TOL or y < spec.y_c - BOUNDARY_TOL:
        raise GeometryError(f"({x}, {y}) is not on {side.value}")
    y = min(max(y, spec.y_c), 0.0)
    if abs(x - characteristic_x(side, y, spec)) > BOUNDARY_TOL:
        raise GeometryError(f"({x}, {y}) is not on {side.value}")
    return characteristic_normal(side, np.sqrt(-y))


def on_boundary(side, point, spec: DomainSpec | None = None, tol: float = BOUNDARY_TOL) -> bool:
    try:
        side = Side.parse(side)
        spec = spec or DomainSpec()
        x, y = float(point[0]), float(point[1])
        if side is Side.GAMMA0:
            return abs(x) <= 1.0 + tol and abs(y - spec.d * (1.0 - abs(x))) <= tol and y >= -tol
        if y > tol or y < spec.y_c - tol:
            return False
        y = min(max(y, spec.y_c), 0.0)
        return abs(x - characteristic_x(side, y, spec)) <= tol
    except DomainError:
        return False


def contains(point, spec: DomainSpec | None = None) -> bool:
    """Strict interior membership test."""
    spec = spec or DomainSpec()
    x, y = float(point[0]), float(point[1])
    if abs(x) >= 1.0 or y >= spec.d - spec.d * abs(x):
        return False
    if y <= spec.y_c:
        return False
    yy = min(y, 0.0)
    return characteristic_x(Side.GAMMA1, yy, spec) < x < characteristic_x(Side.GAMMA2, yy, spec)


@dataclass(frozen=True)
class Arc:
    """Piece of a characteristic between parameters ``t0`` and ``t1``."""

    side: Side
    t0: float
    t1: float

    def point(self, t):
        return characteristic_point(self.side, t)

    def tangent(self, t):
        return characteristic_tangent(self.side, t)

    def normal(self, t):
        return characteristic_normal(self.side, t)

    def at_fraction(self, s):
        """Point at ``t = t0 + s (t1 - t0)`` and its derivative in ``s``."""
        s = np.asarray(s, dtype=float)
        t = self.t0 + s * (self.t1 - self.t0)
        return self.point(t), self.tangent(t) * (self.t1 - self.t0)

    def length(self) -> float:
        # arc length element is 2 t sqrt(1 + t^2) dt
        F = lambda t: (2.0 / 3.0) * (1.0 + t * t) ** 1.5
        return abs(F(self.t1) - F(self.t0))

"""Exact solutions and the data ``f = K u_xx + u_yy``, ``g = u`` derived from them."""
from __future__ import annotations

import numpy as np

from .jets import taylor


class ExactSolution:
    """Base class: subclasses define :meth:`u` using only ``+ - * **``.

    Derivatives are obtained by evaluating :meth:`u` on jets, so ``u`` must
    accept floats, numpy arrays and :class:`~tricomi_dg.jets.Jet` objects.
    """

    name = "exact"

    def u(self, x, y):
        raise NotImplementedError

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        # constant solutions return a scalar from ``u``
        return np.zeros(x.shape) + self.u(x, y)

    def derivatives(self, x, y) -> dict:
        """``u, ux, uy, uxx, uxy, uyy`` at the given points."""
        c = taylor(self.u, x, y, 2)
        return {"v": c[0, 0], "x": c[1, 0], "y": c[0, 1],
                "xx": 2.0 * c[2, 0], "xy": c[1, 1], "yy": 2.0 * c[0, 2]}

    def gradient(self, x, y):
        c = taylor(self.u, x, y, 1)
        return np.stack([c[1, 0], c[0, 1]], axis=-1)

    def source(self, x, y):
        d = self.derivatives(x, y)
        return np.asarray(y, float) * d["xx"] + d["yy"]

    def source_taylor(self, x, y, order: int) -> np.ndarray:
        """Taylor coefficients of ``f`` at ``(x, y)`` up to total degree ``order``.

        Shape ``(order+1, order+1, *batch)``; entries with ``i + j > order``
        are zero.
        """
        U = taylor(self.u, x, y, order + 2)
        N = order
        y0 = np.asarray(y, float)
        F = np.zeros((N + 1, N + 1) + U.shape[2:])
        for m in range(N + 1):
            for n in range(N + 1 - m):
                uxx = (m + 2) * (m + 1) * U[m + 2, n]
                uxx_lo = (m + 2) * (m + 1) * U[m + 2, n - 1] if n >= 1 else 0.0
                uyy = (n + 2) * (n + 1) * U[m, n + 2]
                F[m, n] = y0 * uxx + uxx_lo + uyy
        return F


class ManufacturedSolution(ExactSolution):
    """``u = (1-x)^2 (1+x) y^3 (1-y) [9 (1+x)^2 + 4 y^3]``."""

    name = "manufactured"

    def u(self, x, y):
        return (1 - x) ** 2 * (1 + x) * y ** 3 * (1 - y) * (9 * (1 + x) ** 2 + 4 * y ** 3)


class PolynomialSolution(ExactSolution):
    """Global polynomial ``sum a[j, k] x^j y^k``."""

    name = "polynomial"

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)

    @classmethod
    def random(cls, degree: int, rng=None):
        rng = np.random.default_rng(rng)
        a = np.zeros((degree + 1, degree + 1))
        for j in range(degree + 1):
            for k in range(degree + 1 - j):
                a[j, k] = rng.standard_normal()
        return cls(a)

    @property
    def degree(self) -> int:
        nz = np.argwhere(self.coeffs != 0)
        return int(nz.sum(axis=1).max()) if len(nz) else 0

    def u(self, x, y):
        out = 0.0
        for j, k in np.argwhere(self.coeffs != 0):
            out = out + float(self.coeffs[j, k]) * (x ** int(j)) * (y ** int(k))
        return out

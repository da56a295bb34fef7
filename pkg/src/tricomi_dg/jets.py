"""Truncated bivariate Taylor arithmetic (higher-order forward-mode AD).

A :class:`Jet` of order ``N`` stores the Taylor coefficients
``c[i, j] = D_x^i D_y^j f / (i! j!)`` for ``i + j <= N``, vectorized over any
trailing batch shape.  Functions written with ``+ - * **`` on plain floats work
unchanged on jets.
"""
from __future__ import annotations

from math import factorial

import numpy as np


class Jet:
    __array_priority__ = 100

    def __init__(self, coeffs: np.ndarray, order: int):
        self.c = coeffs
        self.order = order

    # construction ------------------------------------------------------
    @classmethod
    def constant(cls, value, order: int, shape=()):
        c = np.zeros((order + 1, order + 1) + tuple(shape))
        c[0, 0] = value
        return cls(c, order)

    @classmethod
    def variables(cls, x, y, order: int):
        """Independent variables seeded at ``(x, y)``."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        cx = np.zeros((order + 1, order + 1) + x.shape)
        cy = np.zeros_like(cx)
        cx[0, 0], cy[0, 0] = x, y
        if order >= 1:
            cx[1, 0] = 1.0
            cy[0, 1] = 1.0
        return cls(cx, order), cls(cy, order)

    # access --------------------------------------------------------------
    @property
    def value(self):
        return self.c[0, 0]

    def derivative(self, i: int, j: int):
        """Partial derivative ``D_x^i D_y^j``."""
        if i + j > self.order:
            raise ValueError("derivative order exceeds jet order")
        return self.c[i, j] * (factorial(i) * factorial(j))

    # arithmetic ----------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Jet):
            if other.order != self.order:
                raise ValueError("jet orders differ")
            return other
        shape = np.broadcast_shapes(np.shape(other), self.c.shape[2:])
        return Jet.constant(other, self.order, shape)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.c + o.c, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.order)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * other, self.order)
        N = self.order
        a, b = self.c, other.c
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for i in range(N + 1):
            for j in range(N + 1 - i):
                acc = out[i, j]
                for k in range(i + 1):
                    for l in range(j + 1):
                        acc = acc + a[k, l] * b[i - k, j - l]
                out[i, j] = acc
        return Jet(out, N)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if int(n) != n or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Jet.constant(1.0, self.order, self.c.shape[2:])
        base = self
        n = int(n)
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result


def taylor(fn, x, y, order: int) -> np.ndarray:
    """Taylor coefficients of ``fn`` at ``(x, y)``; shape ``(order+1, order+1, *batch)``."""
    X, Y = Jet.variables(x, y, order)
    out = fn(X, Y)
    if not isinstance(out, Jet):
        return Jet.constant(out, order, np.shape(X.value)).c
    return np.broadcast_to(out.c, X.c.shape).copy()

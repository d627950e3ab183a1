"""Truncated multivariate Taylor arithmetic (higher-order forward-mode AD).

A :class:`Jet` stores the Taylor coefficients ``c_a = d^a f / a!`` of a
function of `nvars` perturbation variables, truncated at total order `order`.
Coefficients carry an arbitrary trailing batch shape so that a single jet
evaluates a whole grid of base points at once.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import sparse

from .poly import factorial_multi, graded_monomials


@functools.lru_cache(maxsize=None)
def _layout(nvars: int, order: int):
    monos = graded_monomials(nvars, order)
    index = {a: i for i, a in enumerate(monos)}
    left, right, target = [], [], []
    for i, a in enumerate(monos):
        for j, b in enumerate(monos):
            k = tuple(x + y for x, y in zip(a, b))
            if sum(k) <= order:
                left.append(i)
                right.append(j)
                target.append(index[k])
    left = np.array(left)
    right = np.array(right)
    scatter = sparse.csr_matrix(
        (np.ones(len(target)), (np.array(target), np.arange(len(target)))),
        shape=(len(monos), len(target)),
    )
    if scatter.shape[0] * scatter.shape[1] <= 200_000:
        # small layouts: dense BLAS beats sparse dispatch overhead
        scatter = scatter.toarray()
    fact = np.array([factorial_multi(a) for a in monos], dtype=float)
    return monos, index, left, right, scatter, fact


class Jet:
    """Truncated Taylor expansion in `nvars` variables up to total `order`."""

    __array_priority__ = 100

    def __init__(self, coeffs, nvars: int, order: int):
        self.c = np.asarray(coeffs, dtype=float)
        self.nvars = nvars
        self.order = order

    @classmethod
    def constant(cls, value, nvars: int, order: int, batch_shape=None):
        value = np.asarray(value, dtype=float)
        shape = value.shape if batch_shape is None else batch_shape
        monos = _layout(nvars, order)[0]
        c = np.zeros((len(monos),) + tuple(shape))
        c[0] = value
        return cls(c, nvars, order)

    @classmethod
    def variable(cls, value, k: int, nvars: int, order: int):
        """The jet of ``value + h_k``."""
        out = cls.constant(value, nvars, order)
        if order >= 1:
            e = tuple(int(i == k) for i in range(nvars))
            out.c[_layout(nvars, order)[1][e]] = 1.0
        return out

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    @property
    def monomials(self):
        return _layout(self.nvars, self.order)[0]

    def coef(self, alpha) -> np.ndarray:
        return self.c[_layout(self.nvars, self.order)[1][tuple(alpha)]]

    def derivative(self, alpha) -> np.ndarray:
        """The partial ``d^alpha`` at the base point."""
        return self.coef(alpha) * factorial_multi(alpha)

    def derivatives(self) -> np.ndarray:
        fact = _layout(self.nvars, self.order)[5]
        return self.c * fact.reshape((-1,) + (1,) * (self.c.ndim - 1))

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.nvars != self.nvars or other.order != self.order:
                raise ValueError("incompatible jets")
            return other
        other = np.asarray(other, dtype=float)
        c = np.zeros((self.c.shape[0],) + np.broadcast_shapes(other.shape, self.c.shape[1:]))
        c[0] = other
        return Jet(c, self.nvars, self.order)

    def _batch(self, ndim: int) -> np.ndarray:
        # batch axes follow the coefficient axis, so pad there before broadcasting
        pad = ndim - (self.c.ndim - 1)
        return self.c.reshape(self.c.shape[:1] + (1,) * pad + self.c.shape[1:]) if pad > 0 else self.c

    def _pair(self, other: "Jet"):
        nd = max(self.c.ndim, other.c.ndim) - 1
        return self._batch(nd), other._batch(nd)

    def __add__(self, other):
        a, b = self._pair(self._lift(other))
        return Jet(a + b, self.nvars, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.nvars, self.order)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self._batch(other.ndim) * other, self.nvars, self.order)
        other = self._lift(other)
        _, _, left, right, scatter, _ = _layout(self.nvars, self.order)
        ca, cb = self._pair(other)
        a = ca[left]
        b = cb[right]
        prod = a * b
        batch = prod.shape[1:]
        out = scatter @ prod.reshape(prod.shape[0], -1)
        return Jet(np.asarray(out).reshape((scatter.shape[0],) + batch), self.nvars, self.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self._batch(other.ndim) / other, self.nvars, self.order)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = Jet.constant(np.ones(self.c.shape[1:]), self.nvars, self.order)
            base = self
            while p:
                if p & 1:
                    out = out * base
                base = base * base
                p >>= 1
            return out
        return self.power(float(p))

    def _compose(self, derivs) -> "Jet":
        """Apply a scalar function given its derivatives at the base value.

        `derivs[n]` is ``f^(n)(value)``; evaluated by Horner on the
        zero-constant part of the jet.
        """
        h = Jet(self.c.copy(), self.nvars, self.order)
        h.c[0] = 0.0
        out = self._lift(derivs[self.order] / math.factorial(self.order))
        for n in range(self.order - 1, -1, -1):
            out = out * h + derivs[n] / math.factorial(n)
        return out

    def exp(self):
        e = np.exp(self.value)
        return self._compose([e] * (self.order + 1))

    def reciprocal(self):
        v = self.value
        return self._compose([(-1) ** n * math.factorial(n) / v ** (n + 1) for n in range(self.order + 1)])

    def power(self, p: float):
        v = self.value
        derivs = []
        coef = 1.0
        for n in range(self.order + 1):
            derivs.append(coef * v ** (p - n))
            coef *= p - n
        return self._compose(derivs)

    def sqrt(self):
        return self.power(0.5)

    def log(self):
        v = self.value
        derivs = [np.log(v)] + [(-1) ** (n - 1) * math.factorial(n - 1) / v ** n for n in range(1, self.order + 1)]
        return self._compose(derivs)

    def cos(self):
        v = self.value
        cyc = [np.cos(v), -np.sin(v), -np.cos(v), np.sin(v)]
        return self._compose([cyc[n % 4] for n in range(self.order + 1)])

    def sin(self):
        v = self.value
        cyc = [np.sin(v), np.cos(v), -np.sin(v), -np.cos(v)]
        return self._compose([cyc[n % 4] for n in range(self.order + 1)])


def exp(x):
    return x.exp() if isinstance(x, Jet) else np.exp(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(x)


def cos(x):
    return x.cos() if isinstance(x, Jet) else np.cos(x)


def sin(x):
    return x.sin() if isinstance(x, Jet) else np.sin(x)


def seed(points, order: int, offset: int = 0, nvars: int | None = None):
    """Coordinate jets ``x_k + h_{offset+k}`` for points of shape ``(..., d)``."""
    points = np.asarray(points, dtype=float)
    d = points.shape[-1]
    nvars = d if nvars is None else nvars
    return tuple(Jet.variable(points[..., k], offset + k, nvars, order) for k in range(d))

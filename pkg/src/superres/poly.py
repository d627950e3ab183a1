"""Multivariate polynomials over multi-indices, used both as functions and as
differential operators ``P(d)``.

Multi-indices are plain tuples of non-negative ints. A :class:`Polynomial`
is an immutable sparse map ``multi-index -> coefficient``.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Mapping

import numpy as np

MultiIndex = tuple


class OracleOrderError(ValueError):
    """A derivative oracle was asked for a partial beyond its supported order."""


def total_degree(alpha) -> int:
    return int(sum(alpha))


def factorial_multi(alpha) -> int:
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


def check_multi_index(alpha, d: int | None = None) -> MultiIndex:
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError(f"negative exponent in multi-index {alpha}")
    if d is not None and len(alpha) != d:
        raise ValueError(f"multi-index {alpha} has length {len(alpha)}, expected {d}")
    return alpha


def graded_monomials(d: int, degmax: int) -> list[MultiIndex]:
    """All multi-indices of length `d` with total degree <= `degmax`.

    Sorted by total degree, ties broken lexicographically, e.g.
    ``graded_monomials(2, 1) == [(0, 0), (0, 1), (1, 0)]``.
    """
    if d < 1 or degmax < 0:
        raise ValueError("need d >= 1 and degmax >= 0")
    out = []
    for deg in range(degmax + 1):
        out.extend(homogeneous_monomials(d, deg))
    return out


def homogeneous_monomials(d: int, deg: int) -> list[MultiIndex]:
    return sorted(a for a in itertools.product(range(deg + 1), repeat=d) if sum(a) == deg)


def _var_names(d: int) -> list[str]:
    if d == 1:
        return ["x"]
    if d == 2:
        return ["x", "y"]
    if d == 3:
        return ["x", "y", "z"]
    return [f"x{i + 1}" for i in range(d)]


class Polynomial:
    """Sparse real polynomial in `dim` variables.

    Zero coefficients are never stored. Evaluation broadcasts over leading
    axes of the point array (last axis = coordinates).
    """

    __slots__ = ("_dim", "_terms")

    def __init__(self, dim: int, terms: Mapping | Iterable = (), tol: float = 0.0):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for alpha, c in items:
            alpha = check_multi_index(alpha, dim)
            acc[alpha] = acc.get(alpha, 0.0) + float(c)
        self._dim = dim
        self._terms = {a: c for a, c in acc.items() if abs(c) > tol}

    @classmethod
    def monomial(cls, alpha, coef: float = 1.0) -> "Polynomial":
        alpha = tuple(alpha)
        return cls(len(alpha), {alpha: coef})

    @classmethod
    def constant(cls, dim: int, value: float = 1.0) -> "Polynomial":
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def linear(cls, v) -> "Polynomial":
        """The linear form ``v . X``."""
        v = np.asarray(v, dtype=float)
        d = v.size
        return cls(d, {tuple(int(i == k) for i in range(d)): v[k] for k in range(d)})

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def coef(self, alpha) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    @property
    def degree(self) -> int:
        if not self._terms:
            return -1
        return max(sum(a) for a in self._terms)

    @property
    def low_degree(self) -> int:
        if not self._terms:
            return -1
        return min(sum(a) for a in self._terms)

    def is_homogeneous(self) -> bool:
        return self.degree == self.low_degree

    def is_zero(self) -> bool:
        return not self._terms

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self._dim:
            raise ValueError(f"point has dimension {x.shape[-1]}, polynomial has {self._dim}")
        out = np.zeros(x.shape[:-1])
        for alpha, c in self._terms.items():
            term = np.full(x.shape[:-1], c)
            for k, a in enumerate(alpha):
                if a:
                    term = term * x[..., k] ** a
            out = out + term
        return out if out.ndim else float(out)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self._dim, other)
        self._same_dim(other)
        acc = dict(self._terms)
        for a, c in other.items():
            acc[a] = acc.get(a, 0.0) + c
        return Polynomial(self._dim, acc)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self._dim, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            self._same_dim(other)
            acc: dict = {}
            for a, c in self._terms.items():
                for b, e in other.items():
                    k = tuple(i + j for i, j in zip(a, b))
                    acc[k] = acc.get(k, 0.0) + c * e
            return Polynomial(self._dim, acc)
        s = float(other)
        return Polynomial(self._dim, {a: s * c for a, c in self._terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / float(s))

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(self._dim, 1.0)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._dim == other._dim and self._terms == other._terms

    def __hash__(self):
        return hash((self._dim, tuple(sorted(self._terms.items()))))

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coef(k) - other.coef(k)) <= atol for k in keys)

    def homogeneous_part(self, deg: int) -> "Polynomial":
        return Polynomial(self._dim, {a: c for a, c in self._terms.items() if sum(a) == deg})

    def compose_linear(self, A) -> "Polynomial":
        """Return ``x -> P(A @ x)`` for a square matrix `A`."""
        A = np.asarray(A, dtype=float)
        rows = [Polynomial.linear(A[k]) for k in range(self._dim)]
        out = Polynomial(self._dim)
        for alpha, c in self._terms.items():
            term = Polynomial.constant(self._dim, c)
            for k, a in enumerate(alpha):
                if a:
                    term = term * rows[k] ** a
            out = out + term
        return out

    def b_inner(self, other: "Polynomial") -> float:
        """``(P(d) Q)(0) = sum_a p_a q_a a!``."""
        return sum(c * other.coef(a) * factorial_multi(a) for a, c in self._terms.items())

    def coefficients(self, monomials) -> np.ndarray:
        return np.array([self.coef(a) for a in monomials])

    def _same_dim(self, other):
        if other.dim != self._dim:
            raise ValueError("dimension mismatch")

    def to_json(self) -> list:
        return [[list(a), c] for a, c in sorted(self._terms.items(), key=lambda t: (sum(t[0]), t[0]))]

    @classmethod
    def from_json(cls, dim: int, data) -> "Polynomial":
        return cls(dim, [(tuple(a), c) for a, c in data])

    def __str__(self):
        if not self._terms:
            return "0"
        names = _var_names(self._dim)
        parts = []
        for alpha, c in sorted(self._terms.items(), key=lambda t: (sum(t[0]), t[0])):
            mono = "*".join(
                names[k] + (f"^{a}" if a > 1 else "") for k, a in enumerate(alpha) if a
            )
            if not mono:
                parts.append(f"{c:.6g}")
            elif c == 1.0:
                parts.append(mono)
            elif c == -1.0:
                parts.append("-" + mono)
            else:
                parts.append(f"{c:.6g}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    def __repr__(self):
        return f"Polynomial({self._dim}, {self._terms!r})"


class DerivativeOracle:
    """Supplies partial derivatives ``d^alpha f(x)`` up to `max_order`.

    `func(alpha, x)` must return the exact partial for ``|alpha| <= max_order``.
    """

    def __init__(self, func: Callable, dim: int, max_order: int):
        self.func = func
        self.dim = dim
        self.max_order = max_order

    def __call__(self, alpha, x):
        alpha = check_multi_index(alpha, self.dim)
        if sum(alpha) > self.max_order:
            raise OracleOrderError(
                f"partial of order {sum(alpha)} requested, oracle supplies up to {self.max_order}"
            )
        return self.func(alpha, x)


def apply_diff(P: Polynomial, f: DerivativeOracle, x):
    """``(P(d) f)(x) = sum_a p_a d^a f(x)``."""
    if P.dim != f.dim:
        raise ValueError("dimension mismatch between operator and oracle")
    if P.degree > f.max_order:
        raise OracleOrderError(
            f"operator of degree {P.degree} exceeds oracle order {f.max_order}"
        )
    total = 0.0
    for alpha, c in P.items():
        total = total + c * f(alpha, x)
    return total


def directional_operator(v, j: int) -> Polynomial:
    """The operator polynomial ``(v . X)^j``, expanded multinomially."""
    if j < 0:
        raise ValueError("order must be >= 0")
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("direction must be nonzero")
    return Polynomial.linear(v) ** j


def directional_derivative(f: DerivativeOracle, v, j: int, x):
    """``d^j/dt^j f(x + t v)`` at ``t = 0``."""
    return apply_diff(directional_operator(v, j), f, x)

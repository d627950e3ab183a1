"""Parameter domains: axis-aligned boxes, the open unit disc, the 1-D torus."""

from __future__ import annotations

import numpy as np


class DomainError(ValueError):
    """A point lies outside the domain on which a kernel is defined."""


class Box:
    kind = "box"
    periodic = False

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("invalid box bounds")

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def grid_axes(self, n: int):
        return [np.linspace(self.lo[k], self.hi[k], n) for k in range(self.dim)]

    def grid(self, n: int):
        """Row-major grid; returns ``(points (M, d), mask (M,), shape)``."""
        axes = self.grid_axes(n)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return pts, np.ones(len(pts), dtype=bool), tuple(len(a) for a in axes)

    def displacement(self, x, y) -> np.ndarray:
        return np.asarray(x, dtype=float) - np.asarray(y, dtype=float)

    def distance(self, x, y) -> np.ndarray:
        return np.linalg.norm(self.displacement(x, y), axis=-1)

    def sample(self, rng, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    def normalize_point(self, x):
        return np.asarray(x, dtype=float)

    # optimizer coordinates: identity plus box bounds
    def bounds(self):
        return list(zip(self.lo, self.hi))

    def to_free(self, x):
        return np.asarray(x, dtype=float)

    def from_free(self, v):
        v = np.asarray(v, dtype=float)
        return v, np.broadcast_to(np.eye(self.dim), v.shape[:-1] + (self.dim, self.dim))

    def to_json(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class Disc(Box):
    """Open disc of radius `radius`; grids and optimizers stay inside `inner`."""

    kind = "disc"

    def __init__(self, radius: float = 1.0, inner: float = 0.98):
        super().__init__([-radius, -radius], [radius, radius])
        self.radius = float(radius)
        self.inner = float(inner) * self.radius

    @property
    def diameter(self) -> float:
        return 2 * self.radius

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.sum(x**2, axis=-1) < self.radius**2

    def grid(self, n: int):
        pts, _, shape = super().grid(n)
        mask = np.linalg.norm(pts, axis=-1) <= self.inner
        return pts, mask, shape

    def sample(self, rng, n: int) -> np.ndarray:
        r = self.inner * np.sqrt(rng.uniform(size=n))
        a = rng.uniform(0, 2 * np.pi, size=n)
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)

    def bounds(self):
        return None

    # x = inner * v / sqrt(1 + |v|^2) maps the plane onto the open inner disc
    def to_free(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x**2, axis=-1, keepdims=True)
        if np.any(r2 >= self.inner**2):
            raise DomainError("point outside the optimisation disc")
        return x / np.sqrt(self.inner**2 - r2)

    def from_free(self, v):
        v = np.asarray(v, dtype=float)
        s = np.sqrt(1.0 + np.sum(v**2, axis=-1, keepdims=True))
        x = self.inner * v / s
        eye = np.eye(self.dim)
        jac = self.inner * (eye / s[..., None] - v[..., :, None] * v[..., None, :] / s[..., None] ** 3)
        return x, jac

    def to_json(self):
        return {"kind": self.kind, "radius": self.radius, "inner": self.inner / self.radius}


class Torus(Box):
    """The 1-D torus R/Z (period 1); distances wrap to [-1/2, 1/2)."""

    kind = "torus"
    periodic = True

    def __init__(self, period: float = 1.0):
        super().__init__([0.0], [period])
        self.period = float(period)

    @property
    def diameter(self) -> float:
        return 0.5 * self.period

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all(np.isfinite(x), axis=-1)

    def grid(self, n: int):
        pts = (np.arange(n) * self.period / n)[:, None]
        return pts, np.ones(n, dtype=bool), (n,)

    def displacement(self, x, y) -> np.ndarray:
        u = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return u - self.period * np.floor(u / self.period + 0.5)

    def normalize_point(self, x):
        return np.mod(np.asarray(x, dtype=float), self.period)

    def bounds(self):
        return None

    def to_json(self):
        return {"kind": self.kind, "period": self.period}

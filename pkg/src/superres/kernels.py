"""Correlation kernels ``Corr(x, x') = <phi(x), phi(x')>`` and their mixed partials.

Four measurement setups are provided:

``gaussian2d``
    Gaussian convolution on the plane, ``exp(-|x - x'|^2 / (4 sigma^2))``.
``gmixture1d``
    Mixtures of 1-D Gaussians parameterised by ``(mean, std)``.
``neuro_disc``
    Boundary observation of ``|x - u|^-2`` sources in the unit disc.
``lowpass_torus``
    Ideal low-pass filter (Dirichlet kernel) on R/Z with cutoff ``fc``.

Partials ``d_x^alpha d_x'^beta Corr`` are exact: Hermite recurrences for the
Gaussian, termwise Fourier differentiation for the Dirichlet kernel, and
truncated Taylor jets (:mod:`superres.jet`) for the two non-convolution kernels
and for any normalised kernel.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from numpy.polynomial.hermite_e import hermeval

from . import jet
from .domain import Box, Disc, DomainError, Torus
from .poly import OracleOrderError, check_multi_index, graded_monomials

DEFAULT_MAX_ORDER = 8


class OrderCapError(OracleOrderError):
    """Requested derivative order exceeds the kernel's declared cap."""


def _coords(x):
    x = np.asarray(x, dtype=float)
    return tuple(x[..., k] for k in range(x.shape[-1]))


class CorrelationKernel:
    """Base class. Subclasses implement :meth:`_formula` on coordinate tuples
    whose entries may be arrays or :class:`~superres.jet.Jet` objects."""

    name = "kernel"
    translation_invariant = False

    def __init__(self, dim, domain, z0, normalized=False, max_order=DEFAULT_MAX_ORDER):
        self.dim = dim
        self.domain = domain
        self.z0 = np.asarray(z0, dtype=float).reshape(dim)
        self.normalized = bool(normalized)
        self.max_order = int(max_order)

    # -- to override -------------------------------------------------------
    def _formula(self, xs, xps):
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    # -- public API --------------------------------------------------------
    def check_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"points must have {self.dim} coordinates")
        if not np.all(self.domain.contains(x)):
            raise DomainError(f"point outside the {self.name} domain")
        return x

    def _value(self, xs, xps):
        v = self._formula(xs, xps)
        if self.normalized:
            v = v / jet.sqrt(self._formula(xs, xs) * self._formula(xps, xps))
        return v

    def corr(self, x, xp):
        x = self.check_points(x)
        xp = self.check_points(xp)
        return self._value(_coords(x), _coords(xp))

    def _check_request(self, alpha, beta):
        alpha = check_multi_index(alpha, self.dim)
        beta = check_multi_index(beta, self.dim)
        if sum(alpha) + sum(beta) > 2 * self.max_order:
            raise OrderCapError(
                f"requested order {sum(alpha) + sum(beta)} exceeds cap 2*{self.max_order}"
            )
        return alpha, beta

    def partial(self, alpha, beta, x, xp):
        """Exact ``d_x^alpha d_x'^beta Corr(x, x')``, broadcast over points."""
        alpha, beta = self._check_request(alpha, beta)
        return self.partials(x, xp, sum(alpha), sum(beta))[(alpha, beta)]

    def partials(self, x, xp, order_x: int, order_xp: int) -> dict:
        """All partials with ``|alpha| <= order_x`` and ``|beta| <= order_xp``.

        Returned as a dict keyed by ``(alpha, beta)``.
        """
        if order_x + order_xp > 2 * self.max_order:
            raise OrderCapError(f"requested order {order_x + order_xp} exceeds cap 2*{self.max_order}")
        x = self.check_points(x)
        xp = self.check_points(xp)
        return self._jet_partials(x, xp, order_x, order_xp)

    def _jet_partials(self, x, xp, order_x, order_xp):
        d = self.dim
        if order_xp == 0:
            xs = jet.seed(x, order_x)
            f = self._value(xs, _coords(xp))
            return {(a, (0,) * d): f.derivative(a) for a in graded_monomials(d, order_x)}
        if order_x == 0:
            xps = jet.seed(xp, order_xp)
            f = self._value(_coords(x), xps)
            return {((0,) * d, b): f.derivative(b) for b in graded_monomials(d, order_xp)}
        order = order_x + order_xp
        xs = jet.seed(x, order, offset=0, nvars=2 * d)
        xps = jet.seed(xp, order, offset=d, nvars=2 * d)
        f = self._value(xs, xps)
        out = {}
        for a in graded_monomials(d, order_x):
            for b in graded_monomials(d, order_xp):
                out[(a, b)] = f.derivative(a + b)
        return out

    def normalize(self) -> "CorrelationKernel":
        """The L2-normalised kernel ``Corr / sqrt(Corr(x,x) Corr(x',x'))``."""
        if self.normalized:
            return self
        out = self._copy()
        out.normalized = True
        return out

    def _copy(self):
        out = object.__new__(type(self))
        out.__dict__.update(self.__dict__)
        return out

    def with_max_order(self, max_order: int) -> "CorrelationKernel":
        out = self._copy()
        out.max_order = int(max_order)
        return out

    def gram(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.corr(points[:, None, :], points[None, :, :])

    def to_json(self) -> dict:
        return {
            "kernel": self.name,
            "normalized": self.normalized,
            "max_order": self.max_order,
            "z0": self.z0.tolist(),
            **self.params(),
        }

    def __repr__(self):
        p = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{type(self).__name__}({p}{', ' if p else ''}normalized={self.normalized})"


class GaussianKernel(CorrelationKernel):
    """``Corr(x, x') = exp(-|x - x'|^2 / (4 sigma^2))``; already normalised."""

    name = "gaussian2d"
    translation_invariant = True

    def __init__(self, sigma=1.0, dim=2, z0=None, normalized=True, max_order=DEFAULT_MAX_ORDER,
                 box_halfwidth=None):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        half = 4.0 * self.sigma if box_halfwidth is None else float(box_halfwidth)
        z0 = np.zeros(dim) if z0 is None else z0
        super().__init__(dim, Box([-half] * dim, [half] * dim), z0, normalized, max_order)
        # convolution kernels live on the whole space; the box only frames grids
        self.domain.contains = lambda x: np.all(np.isfinite(np.asarray(x, dtype=float)), axis=-1)

    def params(self):
        return {"sigma": self.sigma}

    def normalize(self):
        return self

    def _formula(self, xs, xps):
        s = 0.0
        for a, b in zip(xs, xps):
            s = s + (a - b) * (a - b)
        return jet.exp(s * (-1.0 / (4 * self.sigma**2)))

    def _deriv_1d(self, n, u):
        # d^n/du^n exp(-(c u)^2 / 2) = (-c)^n He_n(c u) exp(-(c u)^2 / 2)
        c = 1.0 / (math.sqrt(2.0) * self.sigma)
        co = np.zeros(n + 1)
        co[n] = 1.0
        return (-c) ** n * hermeval(c * u, co) * np.exp(-((c * u) ** 2) / 2)

    def partials(self, x, xp, order_x, order_xp):
        if order_x + order_xp > 2 * self.max_order:
            raise OrderCapError(f"requested order {order_x + order_xp} exceeds cap 2*{self.max_order}")
        x = self.check_points(x)
        xp = self.check_points(xp)
        u = x - xp
        K = order_x + order_xp
        table = [[self._deriv_1d(n, u[..., k]) for n in range(K + 1)] for k in range(self.dim)]
        out = {}
        for a in graded_monomials(self.dim, order_x):
            for b in graded_monomials(self.dim, order_xp):
                v = (-1.0) ** sum(b)
                for k in range(self.dim):
                    v = v * table[k][a[k] + b[k]]
                out[(a, b)] = v
        return out

    def corr(self, x, xp):
        x = self.check_points(x)
        xp = self.check_points(xp)
        return np.exp(-np.sum((x - xp) ** 2, axis=-1) / (4 * self.sigma**2))


class GaussianMixtureKernel(CorrelationKernel):
    """Mixture of 1-D Gaussians, points ``(m, s)`` with ``s > 0``:
    ``Corr = exp(-(m - m')^2 / (2 (s^2 + s'^2))) / sqrt(s^2 + s'^2)``."""

    name = "gmixture1d"

    def __init__(self, z0=(0.0, 2.0), normalized=True, max_order=DEFAULT_MAX_ORDER,
                 m_range=(-3.0, 3.0), s_range=(0.5, 6.0)):
        box = Box([m_range[0], s_range[0]], [m_range[1], s_range[1]])
        super().__init__(2, box, z0, normalized, max_order)
        self.domain.contains = lambda x: np.asarray(x, dtype=float)[..., 1] > 0

    def check_points(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 2:
            raise ValueError("points must have 2 coordinates (m, s)")
        if np.any(x[..., 1] <= 0):
            raise DomainError("gmixture1d requires s > 0")
        return x

    def _formula(self, xs, xps):
        m, s = xs
        mp, sp = xps
        v = s * s + sp * sp
        dm = m - mp
        return jet.exp(dm * dm / v * -0.5) / jet.sqrt(v)


class NeuroDiscKernel(CorrelationKernel):
    """Boundary observation of ``|x - u|^-2`` on the unit circle, x in the open disc.

    ``Corr = 2 pi (1 - |x|^2 |x'|^2) / ((1 - |x|^2)(1 - |x'|^2)((1 - <x,x'>)^2 + (x ^ x')^2))``
    """

    name = "neuro_disc"

    def __init__(self, z0=(0.4, 0.3), normalized=True, max_order=DEFAULT_MAX_ORDER, inner=0.98):
        super().__init__(2, Disc(1.0, inner), z0, normalized, max_order)

    def _formula(self, xs, xps):
        x1, x2 = xs
        y1, y2 = xps
        nx = x1 * x1 + x2 * x2
        ny = y1 * y1 + y2 * y2
        dot = x1 * y1 + x2 * y2
        wedge = x1 * y2 - x2 * y1
        one_m_dot = 1.0 - dot
        den = (1.0 - nx) * (1.0 - ny) * (one_m_dot * one_m_dot + wedge * wedge)
        return (1.0 - nx * ny) * (2 * np.pi) / den

    @staticmethod
    def boundary_quadrature(x, xp, nodes: int = 200_000) -> float:
        """Trapezoid rule for ``int_0^{2pi} dt / (|e^{it} - x|^2 |e^{it} - x'|^2)``."""
        t = np.arange(nodes) * (2 * np.pi / nodes)
        e = np.stack([np.cos(t), np.sin(t)], axis=-1)
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        f = 1.0 / (np.sum((e - x) ** 2, axis=-1) * np.sum((e - xp) ** 2, axis=-1))
        return float(np.sum(f) * (2 * np.pi / nodes))


class LowpassKernel(CorrelationKernel):
    """Dirichlet kernel on R/Z: ``sum_{|k| <= fc} exp(2 i pi k (x - x'))``."""

    name = "lowpass_torus"
    translation_invariant = True

    def __init__(self, fc=2, z0=(0.0,), normalized=True, max_order=DEFAULT_MAX_ORDER):
        if int(fc) != fc or fc < 1:
            raise ValueError("fc must be a positive integer")
        self.fc = int(fc)
        super().__init__(1, Torus(1.0), z0, normalized, max_order)

    def params(self):
        return {"fc": self.fc}

    @property
    def _scale(self):
        return 1.0 / (2 * self.fc + 1) if self.normalized else 1.0

    def _formula(self, xs, xps):
        (x,), (y,) = xs, xps
        u = x - y
        s = 1.0
        for k in range(1, self.fc + 1):
            s = s + 2.0 * jet.cos(u * (2 * np.pi * k))
        return s

    def _value(self, xs, xps):
        return self._formula(xs, xps) * self._scale

    def normalize(self):
        out = self._copy()
        out.normalized = True
        return out

    def partials(self, x, xp, order_x, order_xp):
        if order_x + order_xp > 2 * self.max_order:
            raise OrderCapError(f"requested order {order_x + order_xp} exceeds cap 2*{self.max_order}")
        x = self.check_points(x)
        xp = self.check_points(xp)
        u = (x - xp)[..., 0]
        ks = np.arange(-self.fc, self.fc + 1)
        phase = np.exp(2j * np.pi * ks * u[..., None])
        w = 2j * np.pi * ks
        out = {}
        for a in range(order_x + 1):
            for b in range(order_xp + 1):
                out[((a,), (b,))] = self._scale * np.real(np.sum(w**a * (-w) ** b * phase, axis=-1))
        return out

    def corr(self, x, xp):
        x = self.check_points(x)
        xp = self.check_points(xp)
        return self._value(_coords(x), _coords(xp))


KERNELS = {
    "gaussian2d": GaussianKernel,
    "gmixture1d": GaussianMixtureKernel,
    "neuro_disc": NeuroDiscKernel,
    "lowpass_torus": LowpassKernel,
}


def make_kernel(kernel: str = "gaussian2d", **params) -> CorrelationKernel:
    """Build a kernel from its name and keyword parameters (JSON-config style)."""
    try:
        cls = KERNELS[kernel]
    except KeyError:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {sorted(KERNELS)}") from None
    params = {k: v for k, v in params.items() if v is not None}
    if "z0" in params:
        params["z0"] = tuple(np.atleast_1d(params["z0"]))
    return cls(**params)


def finite_difference_partial(kernel, alpha, beta, x, xp, h=0.1, levels=4):
    """Nested central differences of ``kernel.corr`` refined by a Richardson tableau.

    Independent of the analytic and jet paths; used as a test oracle. The
    base step is large on purpose: at fourth order a 1e-3 stencil loses about
    four digits to cancellation, while the tableau removes the truncation
    error of the wider stencils.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    d = len(x)
    orders = list(alpha) + list(beta)
    grids = [range(-o, o + 1, 2) if o else [0] for o in orders]
    terms = []
    for offs in itertools.product(*grids):
        w = 1.0
        for o, j in zip(orders, offs):
            if o:
                k = (o - j) // 2
                w *= (-1) ** k * math.comb(o, k)
        terms.append((w, np.array(offs[:d], dtype=float), np.array(offs[d:], dtype=float)))

    def stencil(step):
        total = sum(w * float(kernel.corr(x + dx * step / 2, xp + dxp * step / 2)) for w, dx, dxp in terms)
        return total / step ** sum(orders)

    table = [stencil(h / 2**i) for i in range(levels)]
    for m in range(1, levels):
        table = [(4**m * table[i + 1] - table[i]) / (4**m - 1) for i in range(len(table) - 1)]
    return table[0]

"""Pre-certificates ``eta_V`` and ``eta_W``, their evaluation and diagnostics.

A :class:`Certificate` is ``eta(x) = sum_j c_j (P_j(d_1) Corr)(a_j, x)``: a
combination of derivative atoms anchored at points ``a_j``. Everything is
computed from kernel partials, never from the feature map itself.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .domain import DomainError
from .leastspace import LeastBasis, b_orthogonalize, least_basis, least_basis_1d
from .poly import Polynomial, graded_monomials, homogeneous_monomials

COND_FLAG = 1e12
SUP_MARGIN = 1e-9
HESS_MARGIN = 1e-9
# equilibrated condition number beyond which R is treated as rank deficient
ETA_W_SINGULAR = 1e13


class SingularSystemError(np.linalg.LinAlgError):
    """The Gram system defining a certificate is numerically singular.

    `rank` is the numerical rank; `consistent` tells whether the right-hand
    side lies in the range (when it does not, no function of the form
    ``Phi^* p`` satisfies the constraints).
    """

    def __init__(self, msg, rank=None, size=None, consistent=None):
        super().__init__(msg)
        self.rank = rank
        self.size = size
        self.consistent = consistent


class StructureError(ValueError):
    """A basis lacks the structure required by a closed-form expression."""


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("SUPERRES_THREADS", "1")))
    except ValueError:
        return 1


def _rank_analysis(Ge: np.ndarray, be: np.ndarray, tol: float = 1e-10):
    U, sv, _ = np.linalg.svd(Ge)
    rank = int(np.sum(sv > tol * sv[0]))
    null = U[:, rank:]
    leak = float(np.linalg.norm(null.T @ be) / max(np.linalg.norm(be), 1e-300))
    return rank, leak < 1e-6


def solve_full_pivot(G: np.ndarray, rhs: np.ndarray, singular_cond: float | None = None):
    """Solve ``G x = rhs`` by LU with complete pivoting; returns ``(x, cond)``.

    The symmetric matrix is first equilibrated by its diagonal, which leaves
    the solution unchanged but removes the spread in scale between atoms of
    different derivative orders. The reported condition number is the one
    of the unscaled matrix. With `singular_cond`, an equilibrated condition
    number above it is treated as singular.
    """
    G = np.asarray(G, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    diag = np.diag(G)
    s = 1.0 / np.sqrt(diag) if np.all(diag > 0) else np.ones(len(G))
    Ge = G * s[:, None] * s[None, :]
    be = rhs * s
    lu, ipiv, jpiv, info = lapack.dgetc2(Ge.copy())
    if info == 0 and singular_cond is not None and not np.linalg.cond(Ge) < singular_cond:
        info = len(G)
    if info > 0:
        rank, consistent = _rank_analysis(Ge, be)
        raise SingularSystemError(
            f"Gram system is singular: numerical rank {rank} of {len(G)}"
            + ("" if consistent else ", constraints inconsistent"),
            rank=rank, size=len(G), consistent=consistent,
        )
    y, scale = lapack.dgesc2(lu, be.copy(), ipiv, jpiv)
    return s * y / scale, float(np.linalg.cond(G))


def _op_matrix(ops, monos):
    return np.array([p.coefficients(monos) for p in ops])


def _group(anchors: np.ndarray):
    groups = {}
    for j, a in enumerate(anchors):
        groups.setdefault(tuple(a), []).append(j)
    return [(np.array(k), np.array(v)) for k, v in groups.items()]


def atom_gram(kernel, anchors, ops) -> np.ndarray:
    """``G[r, s] = P_r^[1](d) P_s^[2](d) Corr(a_r, a_s)``."""
    anchors = np.asarray(anchors, dtype=float)
    d = kernel.dim
    n = len(ops)
    G = np.zeros((n, n))
    groups = _group(anchors)
    for ai, idx_i in groups:
        Di = max(ops[j].degree for j in idx_i)
        mi = graded_monomials(d, Di)
        Ci = _op_matrix([ops[j] for j in idx_i], mi)
        for aj, idx_j in groups:
            Dj = max(ops[j].degree for j in idx_j)
            mj = graded_monomials(d, Dj)
            Cj = _op_matrix([ops[j] for j in idx_j], mj)
            P = kernel.partials(ai, aj, Di, Dj)
            T = np.array([[float(P[(a, b)]) for b in mj] for a in mi])
            G[np.ix_(idx_i, idx_j)] = Ci @ T @ Cj.T
    return 0.5 * (G + G.T)


@dataclass
class Certificate:
    """``eta(x) = sum_j coef[j] * (ops[j](d_1) Corr)(anchors[j], x)``."""

    kernel: object
    anchors: np.ndarray
    ops: list
    coef: np.ndarray
    kind: str
    constraints: list = field(default_factory=list)
    spikes: np.ndarray | None = None
    z0: np.ndarray | None = None
    t: float | None = None
    basis: LeastBasis | None = None
    gram: np.ndarray | None = None
    cond: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return not self.cond < COND_FLAG

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def _derivs_flat(self, X: np.ndarray, order: int) -> dict:
        d = self.dim
        out = {g: np.zeros(len(X)) for g in graded_monomials(d, order)}
        for a, idx in _group(self.anchors):
            D = max(self.ops[j].degree for j in idx)
            monos = graded_monomials(d, D)
            w = self.coef[idx] @ _op_matrix([self.ops[j] for j in idx], monos)
            P = self.kernel.partials(a, X, D, order)
            for g in out:
                for k, al in enumerate(monos):
                    if w[k] != 0.0:
                        out[g] = out[g] + w[k] * P[(al, g)]
        return out

    def derivatives(self, x, order: int = 0, chunk: int = 16384) -> dict:
        """All partials ``d^gamma eta(x)`` with ``|gamma| <= order``."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        X = x.reshape(-1, self.dim)
        if len(X) <= chunk:
            parts = [self._derivs_flat(X, order)]
        else:
            pieces = [X[i:i + chunk] for i in range(0, len(X), chunk)]
            with ThreadPoolExecutor(n_workers()) as ex:
                parts = list(ex.map(lambda p: self._derivs_flat(p, order), pieces))
        return {g: np.concatenate([p[g] for p in parts]).reshape(lead) for g in parts[0]}

    def __call__(self, x):
        return self.derivatives(x, 0)[(0,) * self.dim]

    def derivative(self, gamma, x):
        gamma = tuple(int(g) for g in gamma)
        return self.derivatives(x, sum(gamma))[gamma]

    def grad(self, x) -> np.ndarray:
        D = self.derivatives(x, 1)
        d = self.dim
        return np.stack([D[tuple(int(i == k) for i in range(d))] for k in range(d)], axis=-1)

    def hess(self, x) -> np.ndarray:
        D = self.derivatives(x, 2)
        d = self.dim
        rows = []
        for i in range(d):
            row = []
            for j in range(d):
                g = [0] * d
                g[i] += 1
                g[j] += 1
                row.append(D[tuple(g)])
            rows.append(np.stack(row, axis=-1))
        return np.stack(rows, axis=-2)

    def apply(self, P: Polynomial, x):
        """``(P(d) eta)(x)``."""
        D = self.derivatives(x, max(P.degree, 0))
        return sum(c * D[a] for a, c in P.items())

    def constraint_residuals(self) -> np.ndarray:
        """``(P(d) eta)(p) - target`` for every imposed constraint."""
        return np.array([float(self.apply(P, p)) - target for P, p, target in self.constraints])

    def norm2(self) -> float:
        """``||p||^2 = coef^T G coef`` for the atoms' Gram matrix."""
        G = self.gram if self.gram is not None else atom_gram(self.kernel, self.anchors, self.ops)
        return float(self.coef @ G @ self.coef)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "kernel": self.kernel.to_json(),
            "anchors": self.anchors.tolist(),
            "ops": [p.to_json() for p in self.ops],
            "coef": self.coef.tolist(),
            "cond": self.cond,
            "flagged": self.flagged,
            "t": self.t,
        }


def _as_points(Z, dim: int) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if dim == 1 and Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2 or Z.shape[1] != dim:
        raise ValueError(f"spikes must be an (N, {dim}) array")
    return Z


def scaled_spikes(kernel, Z, t: float, center=None) -> np.ndarray:
    """``z0 + t (z_i - z0)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    Z = _as_points(Z, kernel.dim)
    c = kernel.z0 if center is None else np.asarray(center, dtype=float)
    return c + t * (Z - c)


def eta_v(kernel, Z, t: float = 1.0, center=None) -> Certificate:
    """Vanishing pre-certificate at the spikes ``z0 + t (Z - z0)``.

    Solves ``M alpha = (1, .., 1, 0, .., 0)`` with
    ``M = (d_{1,k} d_{2,l} Corr(z_i, z_j))`` for the atoms value/gradient at
    every spike.
    """
    pts = kernel.check_points(scaled_spikes(kernel, Z, t, center))
    N, d = pts.shape
    one = Polynomial.constant(d)
    ops = [one] * N
    anchors = [p for p in pts]
    for k in range(d):
        ek = Polynomial.monomial(tuple(int(i == k) for i in range(d)))
        ops += [ek] * N
        anchors += [p for p in pts]
    anchors = np.array(anchors)
    G = atom_gram(kernel, anchors, ops)
    rhs = np.r_[np.ones(N), np.zeros(d * N)]
    coef, cond = solve_full_pivot(G, rhs)
    constraints = [(P, a, float(r)) for P, a, r in zip(ops, anchors, rhs)]
    return Certificate(
        kernel=kernel, anchors=anchors, ops=ops, coef=coef, kind="eta_v",
        constraints=constraints, spikes=pts, z0=np.array(kernel.z0 if center is None else center, dtype=float),
        t=float(t), gram=G, cond=cond,
    )


def eta_w(kernel, Z=None, basis: LeastBasis | None = None, z0=None) -> Certificate:
    """Limit certificate at the cluster point `z0` for the geometry `Z`.

    Solves ``R beta = delta`` with ``R_rs = P_r^[1](d) P_s^[2](d) Corr(z0, z0)``
    over the least basis ``{P_r}`` of `Z` (``P_0 = 1``).
    """
    if basis is None:
        if Z is None:
            raise ValueError("need spikes or a basis")
        Zp = _as_points(Z, kernel.dim)
        basis = least_basis_1d(len(Zp)) if kernel.dim == 1 else least_basis(Zp)
    if basis.degrees[0] != 0:
        raise ValueError("basis must start with the constant polynomial")
    z0 = kernel.z0 if z0 is None else np.asarray(z0, dtype=float).reshape(kernel.dim)
    kernel.check_points(z0)
    ops = list(basis.basis)
    anchors = np.tile(z0, (len(ops), 1))
    G = atom_gram(kernel, anchors, ops)
    rhs = np.zeros(len(ops))
    rhs[0] = 1.0 / ops[0].coef((0,) * kernel.dim)
    coef, cond = solve_full_pivot(G, rhs, singular_cond=ETA_W_SINGULAR)
    constraints = [(P, z0, float(r)) for P, r in zip(ops, rhs)]
    spikes = basis.spikes if Z is None else _as_points(Z, kernel.dim)
    return Certificate(
        kernel=kernel, anchors=anchors, ops=ops, coef=coef, kind="eta_w",
        constraints=constraints, spikes=spikes, z0=z0, basis=basis, gram=G, cond=cond,
    )


# -- closed forms ---------------------------------------------------------


def _exp_half_moment(alpha) -> float:
    # <X^alpha, exp(|x|^2 / 2)>_B = prod_i (alpha_i - 1)!! for even alpha_i, else 0
    out = 1.0
    for a in alpha:
        if a % 2:
            return 0.0
        k = a // 2
        out *= math.factorial(a) / (2**k * math.factorial(k))
    return out


def has_closed_form_structure(basis: LeastBasis) -> tuple[bool, int | None]:
    """Whether the basis is ``Pi_L`` plus a homogeneous degree ``L + 1`` tail.

    Returns ``(ok, index)`` where `index` points at the first offending
    polynomial when `ok` is False.
    """
    d = basis.dim
    degs = list(basis.degrees)
    top = max(degs)
    for j, (P, g) in enumerate(zip(basis.basis, degs)):
        if g == top and not P.is_homogeneous():
            return False, j
    # every degree below the top must be complete
    for k in range(top):
        if degs.count(k) != len(homogeneous_monomials(d, k)):
            return False, next(j for j, g in enumerate(degs) if g > k)
    return True, None


def gaussian_closed_form_coefficients(basis: LeastBasis, strict: bool = False):
    """``F = sum_s <P_s, e>_B / <P_s, P_s>_B P_s`` with ``e = exp(|x|^2 / 2)``.

    The basis is B-orthogonalised first. Returns ``(F, structure_ok)``.
    """
    ok, bad = has_closed_form_structure(basis)
    if strict and not ok:
        raise StructureError(f"basis polynomial {bad} ({basis.basis[bad]}) violates the closed-form structure")
    ob = basis if basis.b_orthogonal else b_orthogonalize(basis)
    d = ob.dim
    F = Polynomial(d)
    for P in ob.basis:
        num = sum(c * _exp_half_moment(a) for a, c in P.items())
        if num != 0.0:
            F = F + P * (num / P.b_inner(P))
    return F, ok


def eta_w_gaussian_closed(basis: LeastBasis, x, sigma: float = 1.0, z0=None, strict: bool = False):
    """Closed-form ``eta_W`` for ``Corr = exp(-|x - x'|^2 / (4 sigma^2))``.

    In the coordinates ``u = (x - z0) / (sqrt(2) sigma)`` the kernel reads
    ``exp(-|u - u'|^2 / 2)`` and ``eta_W(u) = exp(-|u|^2 / 2) F(u)`` with `F`
    the B-orthogonal projection of ``exp(|u|^2 / 2)`` onto the least space.
    The least space is scale invariant, so the same basis serves any sigma.
    """
    x = np.asarray(x, dtype=float)
    d = basis.dim
    z0 = np.zeros(d) if z0 is None else np.asarray(z0, dtype=float)
    F, _ = gaussian_closed_form_coefficients(basis, strict=strict)
    u = (x - z0) / (math.sqrt(2.0) * sigma)
    return np.exp(-0.5 * np.sum(u**2, axis=-1)) * F(u)


def lowpass_constant(fc: int) -> float:
    """The constant ``C`` in ``eta_W(x) = 1 - C sin(pi x)^(2 fc)`` for ``N = fc``."""
    fc = int(fc)
    ks = np.arange(-fc, fc + 1)
    w = 2j * np.pi * ks
    n = 2 * fc
    P0 = np.array([[np.real(np.sum(w**r * (-w) ** s)) for s in range(n)] for r in range(n)])
    nz = [k for k in ks if k != 0]
    prod = 1.0
    for l in nz:
        for j in nz:
            if l > j:
                prod *= float(l - j) ** 2
    return float(
        2.0 ** (4 * fc**2) * np.pi ** (4 * fc**2 - 2 * fc) / (math.comb(2 * fc, fc) * np.linalg.det(P0)) * prod
    )


def eta_w_lowpass_1d(fc: int, x):
    """``1 - C sin(pi x)^(2 fc)``: the limit certificate for ``N = fc`` clustered spikes."""
    x = np.asarray(x, dtype=float)
    return 1.0 - lowpass_constant(fc) * np.sin(np.pi * x) ** (2 * int(fc))


# -- diagnostics ----------------------------------------------------------


@dataclass
class NDReport:
    sup_away: float
    sup_location: list
    sup_peaks: float
    hessian_eigs: list
    pair_matrix: list | None
    pair_eigs: list | None
    leading_derivative: float | None
    exclusion_radius: float
    grid: int
    on_boundary: bool
    verdict: str
    cond: float = float("nan")
    singular: bool = False
    rank: int | None = None
    probes: list | None = None

    @property
    def nondegenerate(self) -> bool:
        return self.verdict == "nondegenerate"

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _grid_local_max(v: np.ndarray, periodic: bool = False) -> np.ndarray:
    """Grid points not exceeded by any of their (diagonal included) neighbours."""
    out = np.isfinite(v)
    pad = v if periodic else np.pad(v, 1, constant_values=-np.inf)
    offsets = [o for o in np.ndindex(*(3,) * v.ndim) if any(x != 1 for x in o)]
    for o in offsets:
        shift = tuple(x - 1 for x in o)
        if periodic:
            nb = np.roll(v, shift=tuple(-x for x in shift), axis=tuple(range(v.ndim)))
        else:
            sl = tuple(slice(1 + x, 1 + x + n) for x, n in zip(shift, v.shape))
            nb = pad[sl]
        out &= v >= nb
    return out


POLISH_BAND = 1e-6


def _polish_peak(c: Certificate, x0, centers, radius) -> float:
    """Refine a near-saturating grid peak by ascent on ``log(1 - |eta|)``.

    The logarithm keeps the ascent well scaled on flat peaks. Returns the
    refined ``|eta|``, or ``-inf`` when the ascent runs into an exclusion
    ball (the grid peak was the shoulder of a saturation point).
    """
    from scipy.optimize import minimize

    dom = c.kernel.domain
    disc = dom.kind == "disc"

    def fun(v):
        if not np.all(np.isfinite(v)):
            return 0.0, np.zeros(c.dim)
        x, jac = dom.from_free(v)
        try:
            D = c.derivatives(x, 1)
        except DomainError:
            return 0.0, np.zeros(c.dim)
        val = float(D[(0,) * c.dim])
        g = np.array([float(D[tuple(int(i == k) for i in range(c.dim))]) for k in range(c.dim)])
        gap = max(1.0 - abs(val), 1e-300)
        return np.log(gap), -np.sign(val) * (jac.T @ g) / gap

    x0 = np.asarray(x0, dtype=float)
    if disc and np.linalg.norm(x0) >= dom.inner:
        return float(abs(c(x0)))
    bounds = dom.bounds() if dom.kind == "box" else None
    res = minimize(fun, dom.to_free(x0), jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 200, "gtol": 1e-12, "ftol": 1e-15})
    x = dom.from_free(res.x)[0] if np.all(np.isfinite(res.x)) else x0
    if dom.periodic:
        x = dom.normalize_point(x)
    if any(float(dom.distance(x, z)) < radius for z in centers):
        return -np.inf
    return float(abs(c(x)))


def _diameter(P: np.ndarray) -> float:
    if len(P) < 2:
        return 0.0
    return float(np.max(np.linalg.norm(P[:, None] - P[None], axis=-1)))


def pair_nd_matrix(c: Certificate, Z=None):
    """The 2x2 matrix of pair non-degeneracy at ``z0`` and its eigenvalues.

    Entries ``d_perp^2 eta``, ``1/2 d_perp d_dir^2 eta`` and ``1/12 d_dir^4 eta``
    with unit directions ``d_dir = (z2 - z1)/|z2 - z1|`` and its rotation.
    """
    Z = c.spikes if Z is None else _as_points(Z, c.dim)
    if len(Z) != 2 or c.dim != 2:
        raise ValueError("pair non-degeneracy needs exactly two planar spikes")
    v = Z[1] - Z[0]
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("coincident spikes")
    u = v / nv
    p = np.array([-u[1], u[0]])
    Lu = Polynomial.linear(u)
    Lp = Polynomial.linear(p)
    z0 = c.z0
    a = float(c.apply(Lp**2, z0))
    b = 0.5 * float(c.apply(Lp * Lu**2, z0))
    e = float(c.apply(Lu**4, z0)) / 12.0
    M = np.array([[a, b], [b, e]])
    return M, np.linalg.eigvalsh(M)


def check_nd(c: Certificate, grid: int = 256, exclusion_radius: float | None = None) -> NDReport:
    """Non-degeneracy diagnostics on a uniform grid of the kernel's domain.

    Sup test: ``|eta| < 1 - 1e-9`` at every grid-local maximum of ``|eta|``
    outside balls around the saturation points. Restricting to local maxima
    ignores the flat shoulder of the peak at the saturation points, where
    ``eta`` can sit within 1e-9 of 1 just outside any fixed ball (``eta_W``
    decays like ``1 - c |x|^(2N)``); ``sup_away`` still reports the plain
    maximum. Local test: negative definite Hessians at the spikes for
    ``eta_V``; for ``eta_W`` the first free derivative order at ``z0``
    (Hessian if N = 1, the pair matrix if N = 2 in the plane, the order-2N
    derivative on a line). For ``eta_W`` with three or more planar spikes
    only the sup test applies.
    """
    k = c.kernel
    dom = k.domain
    pts, mask, shape = dom.grid(grid)
    if c.kind == "eta_v":
        centers = c.spikes
        base = _diameter(c.spikes)
    else:
        centers = c.z0[None]
        base = _diameter(np.asarray(c.spikes)) if c.spikes is not None else 0.0
    if exclusion_radius is None:
        exclusion_radius = 0.05 * (base if base > 0 else 0.1 * dom.diameter)
    near = np.zeros(len(pts), dtype=bool)
    for z in centers:
        near |= dom.distance(pts, z) < exclusion_radius
    vals = np.full(len(pts), -np.inf)
    vals[mask] = np.abs(c(pts[mask]))
    keep = mask & ~near
    i = int(np.argmax(np.where(keep, vals, -np.inf)))
    sup = float(vals[i])
    loc = pts[i]
    peaks = keep & _grid_local_max(vals.reshape(shape), periodic=dom.periodic).ravel()
    sup_peaks = -np.inf
    for j in np.flatnonzero(peaks):
        v = vals[j]
        if 1 - POLISH_BAND <= v < 1:
            v = _polish_peak(c, pts[j], centers, exclusion_radius)
        sup_peaks = max(sup_peaks, float(v))
    on_boundary = bool(dom.kind == "box" and np.any(np.isclose(loc, dom.lo) | np.isclose(loc, dom.hi)))

    hess_eigs = [np.linalg.eigvalsh(np.atleast_2d(c.hess(z))).tolist() for z in centers]
    pair_M = pair_eigs = lead = None
    N = len(c.spikes) if c.spikes is not None else 1
    local_ok = True
    local_kind = "degenerate_hessian"
    if c.kind == "eta_v" or N == 1:
        local_ok = all(max(e) < -HESS_MARGIN for e in hess_eigs)
    elif c.dim == 1:
        lead = float(c.derivative((2 * N,), c.z0))
        local_ok = lead < -HESS_MARGIN
    elif N == 2 and c.dim == 2:
        M, eigs = pair_nd_matrix(c)
        pair_M, pair_eigs = M.tolist(), eigs.tolist()
        local_ok = bool(np.max(eigs) < -HESS_MARGIN)
        local_kind = "degenerate_pair"

    if sup_peaks >= 1 - SUP_MARGIN:
        verdict = "degenerate_sup"
    elif not local_ok:
        verdict = local_kind
    else:
        verdict = "nondegenerate"
    return NDReport(
        sup_away=sup, sup_location=loc.tolist(), sup_peaks=sup_peaks, hessian_eigs=hess_eigs, pair_matrix=pair_M,
        pair_eigs=pair_eigs, leading_derivative=lead, exclusion_radius=float(exclusion_radius),
        grid=grid, on_boundary=on_boundary, verdict=verdict, cond=c.cond,
    )


def odd_derivatives(c: Certificate, max_order: int = 5) -> dict:
    """All partials of odd total order ``<= max_order`` at ``z0``."""
    D = c.derivatives(c.z0, max_order)
    return {g: float(v) for g, v in D.items() if sum(g) % 2 == 1}


@dataclass
class ConvergenceTable:
    t: np.ndarray
    sup_diff: np.ndarray
    cond: np.ndarray
    slope: float

    def rows(self):
        return list(zip(self.t.tolist(), self.sup_diff.tolist(), self.cond.tolist()))


def convergence_study(kernel, Z, t_list, grid: int = 129, points=None) -> ConvergenceTable:
    """Sup-norm distance between ``eta_V`` at ``t Z`` and ``eta_W`` for each t.

    The slope is a least-squares fit of ``log(diff)`` against ``log(t)``.
    """
    t_list = np.asarray(t_list, dtype=float)
    if np.any(t_list <= 0):
        raise ValueError("t values must be positive")
    if points is None:
        pts, mask, _ = kernel.domain.grid(grid)
        points = pts[mask]
    W = eta_w(kernel, Z)
    ew = W(points)
    diffs, conds = [], []
    for t in t_list:
        V = eta_v(kernel, Z, t)
        diffs.append(float(np.max(np.abs(V(points) - ew))))
        conds.append(V.cond)
    diffs = np.array(diffs)
    slope = float(np.polyfit(np.log(t_list), np.log(diffs), 1)[0]) if len(t_list) > 1 else float("nan")
    return ConvergenceTable(t_list, diffs, np.array(conds), slope)


def check_nd_limit(kernel, Z, grid: int = 256, exclusion_radius: float | None = None,
                   probe_t=(1.0, 0.5, 0.25, 0.125)) -> NDReport:
    """Non-degeneracy of the limit certificate ``eta_W`` for the geometry `Z`.

    When the Gram system ``R`` is rank deficient and the constraints are
    inconsistent, no limit certificate exists: the pre-certificates at
    ``t Z`` do not converge and their sup norm grows. The report is then
    ``degenerate_sup`` and `probes` lists ``(t, sup |eta_V|)`` at the given
    scales as numerical evidence.
    """
    try:
        W = eta_w(kernel, Z)
    except SingularSystemError as err:
        if err.consistent:
            raise
        probes = []
        pts, mask, _ = kernel.domain.grid(grid)
        for t in probe_t:
            try:
                V = eta_v(kernel, Z, t)
            except SingularSystemError:
                break
            vals = np.abs(V(pts[mask]))
            j = int(np.argmax(vals))
            probes.append((float(t), float(vals[j]), pts[mask][j].tolist()))
        sup = max((p[1] for p in probes), default=float("inf"))
        loc = max(probes, key=lambda p: p[1])[2] if probes else []
        return NDReport(
            sup_away=sup, sup_location=loc, sup_peaks=sup, hessian_eigs=[], pair_matrix=None,
            pair_eigs=None, leading_derivative=None,
            exclusion_radius=float("nan") if exclusion_radius is None else exclusion_radius,
            grid=grid, on_boundary=False, verdict="degenerate_sup", cond=float("inf"),
            singular=True, rank=err.rank, probes=probes,
        )
    return check_nd(W, grid=grid, exclusion_radius=exclusion_radius)

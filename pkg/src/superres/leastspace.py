"""Least interpolant spaces for Hermite interpolation (values and gradients).

The space ``S_Z`` is spanned by the least terms of the exponential
representations of the interpolation functionals. These are obtained by
Gaussian elimination with partial pivoting on the Hermite-Vandermonde
matrix, with columns taken in graded order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .poly import Polynomial, factorial_multi, graded_monomials

PIVOT_TOL = 1e-10


class DegenerateConfigurationError(ValueError):
    """Coincident spikes or a numerically rank-deficient interpolation problem."""


@dataclass(frozen=True)
class HermiteVandermonde:
    """Rows are functionals, columns are graded monomials.

    Row layout: values at every point, then ``d/dx_1`` at every point, ...,
    then ``d/dx_d`` at every point, then the Lagrange-only points.
    """

    matrix: np.ndarray
    monomials: list
    labels: list

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class LeastBasis:
    basis: list
    degrees: list
    spikes: np.ndarray
    extra: np.ndarray | None = None
    center: np.ndarray | None = None
    scale: float = 1.0
    cond: float = 1.0
    b_orthogonal: bool = False
    raw_b_orthogonal: bool | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.basis)

    def __iter__(self):
        return iter(self.basis)

    def __getitem__(self, i):
        return self.basis[i]

    @property
    def dim(self) -> int:
        return self.basis[0].dim

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "basis": [p.to_json() for p in self.basis],
            "pretty": [str(p) for p in self.basis],
            "degrees": list(self.degrees),
            "spikes": np.asarray(self.spikes).tolist(),
            "cond": self.cond,
            "b_orthogonal": self.b_orthogonal,
            "raw_b_orthogonal": self.raw_b_orthogonal,
        }


def _check_points(Z, dim=None) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        return np.zeros((0, dim or 1))
    if Z.ndim == 1:
        Z = Z[:, None] if dim == 1 else Z[None, :]
    return Z


def _check_distinct(P: np.ndarray, scale: float):
    n = len(P)
    if n < 2:
        return
    dist = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
    dist[np.diag_indices(n)] = np.inf
    if np.min(dist) <= 1e-12 * max(scale, 1.0):
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        raise DegenerateConfigurationError(f"duplicate spikes at indices {i} and {j}")


def _monomial_rows(points: np.ndarray, monos, derivative: int | None):
    """Rows ``X^a(z)`` (derivative=None) or ``d/dx_k X^a(z)``."""
    exps = np.array(monos)
    if derivative is None:
        return np.prod(points[:, None, :] ** exps[None], axis=-1)
    k = derivative
    lowered = exps.copy()
    lowered[:, k] = np.maximum(lowered[:, k] - 1, 0)
    vals = np.prod(points[:, None, :] ** lowered[None], axis=-1)
    return vals * exps[None, :, k]


def hermite_vandermonde(Z, degmax: int | None = None, extra=None) -> HermiteVandermonde:
    """Hermite-Vandermonde matrix over the monomials of total degree <= `degmax`.

    Derivative rows carry the true partial derivatives of the monomials
    (including the factor ``a_k``). `degmax` defaults to ``2N - 1`` plus one
    per Lagrange-only point.
    """
    extra_arr = None if extra is None else _check_points(extra)
    dim = extra_arr.shape[1] if (extra_arr is not None and len(extra_arr)) else None
    Z = _check_points(Z, dim)
    d = Z.shape[1] if len(Z) else dim
    if d is None:
        raise ValueError("need at least one point")
    if extra_arr is None:
        extra_arr = np.zeros((0, d))
    if extra_arr.shape[1] != d:
        raise ValueError("spikes and extra points have different dimensions")
    allpts = np.vstack([Z, extra_arr])
    if len(allpts) == 0:
        raise ValueError("need at least one point")
    _check_distinct(allpts, float(np.max(np.abs(allpts))) if allpts.size else 1.0)
    N = len(Z)
    if degmax is None:
        degmax = max(2 * N - 1 + len(extra_arr), 0) if N else max(len(extra_arr) - 1, 0)
    monos = graded_monomials(d, degmax)
    blocks = [_monomial_rows(Z, monos, None)]
    labels = [("value", i) for i in range(N)]
    for k in range(d):
        blocks.append(_monomial_rows(Z, monos, k))
        labels += [(f"d{k + 1}", i) for i in range(N)]
    blocks.append(_monomial_rows(extra_arr, monos, None))
    labels += [("lagrange", i) for i in range(len(extra_arr))]
    return HermiteVandermonde(np.vstack(blocks), monos, labels)


def _eliminate(V: np.ndarray, monos, tol=PIVOT_TOL):
    """Row-pivoted elimination in graded column order.

    Returns the least terms (as coefficient rows restricted to their degree)
    and their degrees.
    """
    W = np.array(V, dtype=float)
    Q = W.shape[0]
    free = list(range(Q))
    degs = np.array([sum(a) for a in monos])
    out = []
    for c in range(len(monos)):
        if not free:
            break
        col = np.abs(W[free, c])
        k = int(np.argmax(col))
        r = free[k]
        scale = np.max(np.abs(W[np.ix_(free, range(c, W.shape[1]))]))
        if col[k] <= tol * scale or scale == 0.0:
            continue
        piv = W[r]
        for o in free:
            if o != r and W[o, c] != 0.0:
                W[o] -= (W[o, c] / piv[c]) * piv
        free.remove(r)
        deg = degs[c]
        row = np.where(degs == deg, W[r], 0.0)
        out.append((row, int(deg), r))
    if free:
        raise DegenerateConfigurationError(
            f"Hermite-Vandermonde matrix is numerically rank deficient ({len(free)} functionals left)"
        )
    return out


def _to_polynomial(row, monos, d, deg):
    terms = {}
    big = np.max(np.abs(row))
    for j, a in enumerate(monos):
        if sum(a) == deg and abs(row[j]) > 1e-13 * big:
            terms[a] = row[j] / factorial_multi(a)
    P = Polynomial(d, terms)
    return P / max(abs(c) for _, c in P.items())


def _collocation(V: np.ndarray, monos, basis) -> np.ndarray:
    C = np.array([p.coefficients(monos) for p in basis]).T
    return V @ C


def _build(Z, extra, center, tol):
    Z0 = _check_points(Z, None if extra is None else np.asarray(extra).shape[-1])
    ex = None if extra is None else _check_points(extra)
    pts = Z0 if ex is None else (np.vstack([Z0, ex]) if len(Z0) else ex)
    if len(pts) == 0:
        raise ValueError("need at least one point")
    d = pts.shape[1]
    c = np.mean(pts, axis=0) if center is None else np.asarray(center, dtype=float).reshape(d)
    diam = 0.0
    if len(pts) > 1:
        diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))
    s = diam if diam > 0 else 1.0
    Zs = (Z0 - c) / s if len(Z0) else np.zeros((0, d))
    exs = None if ex is None else (ex - c) / s
    HV = hermite_vandermonde(Zs, extra=exs)
    least = _eliminate(HV.matrix, HV.monomials, tol)
    # graded order of the pivots is already nondecreasing in degree
    basis = [_to_polynomial(row, HV.monomials, d, deg) for row, deg, _ in least]
    degrees = [deg for _, deg, _ in least]
    G = _collocation(HV.matrix, HV.monomials, basis)
    cond = float(np.linalg.cond(G))
    rhs = np.random.default_rng(0).standard_normal(len(basis))
    sol = np.linalg.solve(G, rhs)
    residual = float(np.max(np.abs(G @ sol - rhs)))
    if not np.isfinite(cond) or residual > 1e-8:
        raise DegenerateConfigurationError("interpolation problem on the computed space is singular")
    return LeastBasis(
        basis=basis,
        degrees=degrees,
        spikes=Z0,
        extra=ex,
        center=c,
        scale=s,
        cond=cond,
        raw_b_orthogonal=is_b_orthogonal(basis),
        meta={"residual": residual},
    )


def least_basis(Z, center=None, tol: float = PIVOT_TOL) -> LeastBasis:
    """Basis of the least interpolant space for values and gradients at `Z`.

    Points are centred (at `center`, default their mean) and scaled to unit
    diameter before elimination. The space itself is invariant under these
    maps; each returned polynomial is homogeneous and normalised to unit
    max-coefficient, with ``P_0 = 1``.

    Raises
    ------
    DegenerateConfigurationError
        For duplicate spikes or a rank-deficient Hermite-Vandermonde matrix.
    """
    Z = _check_points(Z)
    if len(Z) == 0:
        raise ValueError("need at least one spike")
    return _build(Z, None, center, tol)


def extended_least_basis(Z, extra, center=None, tol: float = PIVOT_TOL) -> LeastBasis:
    """Least basis for Hermite data at `Z` plus plain evaluations at `extra`."""
    extra = _check_points(extra)
    Z = _check_points(Z, extra.shape[1])
    if len(Z) and len(extra):
        _check_distinct(np.vstack([Z, extra]), 1.0)
    return _build(Z, extra, center, tol)


def least_basis_1d(N: int) -> LeastBasis:
    """``{1, x, ..., x^(2N-1)}``: the least space for N clustered points on a line."""
    if N < 1:
        raise ValueError("N must be >= 1")
    basis = [Polynomial.monomial((j,)) for j in range(2 * N)]
    return LeastBasis(
        basis=basis,
        degrees=list(range(2 * N)),
        spikes=np.zeros((N, 1)),
        center=np.zeros(1),
        b_orthogonal=True,
        raw_b_orthogonal=True,
    )


def is_b_orthogonal(basis, tol: float = 1e-10) -> bool:
    """Whether ``<P_r, P_s>_B = 0`` for all ``r != s`` (relative to the norms)."""
    n = len(basis)
    norms = [np.sqrt(p.b_inner(p)) for p in basis]
    for r in range(n):
        for s in range(r + 1, n):
            if abs(basis[r].b_inner(basis[s])) > tol * norms[r] * norms[s]:
                return False
    return True


def b_orthogonalize(lb: LeastBasis) -> LeastBasis:
    """Gram-Schmidt in ``<P, Q>_B = sum p_a q_a a!`` within each degree block.

    Homogeneous polynomials of different degrees are already orthogonal, so
    the span of every degree block (hence of the whole basis) is unchanged.
    """
    out = []
    for p, deg in zip(lb.basis, lb.degrees):
        q = p
        for prev, pdeg in zip(out, lb.degrees):
            if pdeg == deg:
                q = q - prev * (q.b_inner(prev) / prev.b_inner(prev))
        q = Polynomial(q.dim, q.terms, tol=1e-14 * max(abs(c) for _, c in p.items()))
        out.append(q / max(abs(c) for _, c in q.items()))
    return replace(lb, basis=out, b_orthogonal=True)


def span_residual(P: Polynomial, basis, monos=None) -> float:
    """Relative least-squares residual of projecting `P` onto ``span(basis)``."""
    if monos is None:
        deg = max([P.degree] + [b.degree for b in basis])
        monos = graded_monomials(P.dim, max(deg, 0))
    B = np.array([b.coefficients(monos) for b in basis]).T
    p = P.coefficients(monos)
    coef, *_ = np.linalg.lstsq(B, p, rcond=None)
    return float(np.linalg.norm(B @ coef - p) / max(np.linalg.norm(p), 1e-300))


def same_span(A, B, tol: float = 1e-8) -> bool:
    """Two polynomial families span the same space (mutual projection test)."""
    if len(A) != len(B):
        return False
    return all(span_residual(p, B) < tol for p in A) and all(span_residual(p, A) < tol for p in B)


def dimension_by_degree(lb: LeastBasis) -> dict:
    """``n -> dim(S_Z intersect Pi_n)`` for ``n = 0..max degree``."""
    return {n: sum(1 for g in lb.degrees if g <= n) for n in range(lb.max_degree + 1)}

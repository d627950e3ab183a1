import itertools

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from superres.leastspace import (
    DegenerateConfigurationError,
    b_orthogonalize,
    dimension_by_degree,
    extended_least_basis,
    hermite_vandermonde,
    is_b_orthogonal,
    least_basis,
    least_basis_1d,
    same_span,
)
from superres.poly import Polynomial, graded_monomials


def M(*alpha, c=1.0):
    return Polynomial.monomial(alpha, c)


EXAMPLE1 = [[0.0, 0.0], [0.0, 1.0]]
THREE = [[0.0, 1.0], [0.0, 0.0], [1.0, 0.0]]
CORNERS = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]


def rank_oracle(Z, n):
    """dim(S_Z cap Pi_n) = rank of the Hermite functionals restricted to Pi_n."""
    HV = hermite_vandermonde(Z, degmax=2 * len(Z))
    cols = [j for j, a in enumerate(HV.monomials) if sum(a) <= n]
    return int(np.linalg.matrix_rank(HV.matrix[:, cols], tol=1e-9))


def test_example1_span():
    lb = least_basis(EXAMPLE1)
    assert same_span(lb.basis, [M(0, 0), M(0, 1), M(1, 0), M(0, 2), M(1, 1), M(0, 3)], tol=1e-10)


def test_three_point_span():
    ref = [M(0, 0), M(1, 0), M(0, 1), M(2, 0), M(0, 2), M(1, 1), M(3, 0), M(0, 3), M(2, 1) - M(1, 2)]
    assert same_span(least_basis(THREE).basis, ref, tol=1e-10)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_aligned_span(N, rng):
    a = np.sort(rng.uniform(-1, 1, N)) if N > 1 else np.array([0.3])
    Z = np.stack([a, np.zeros(N)], axis=-1)
    ref = [M(k, 0) for k in range(2 * N)] + [M(k, 1) for k in range(N)]
    assert same_span(least_basis(Z).basis, ref, tol=1e-10)


def test_four_corners():
    lb = least_basis(CORNERS)
    assert len(lb) == 12
    # Pi_3 plus two quartics
    assert dimension_by_degree(lb) == {0: 1, 1: 3, 2: 6, 3: 10, 4: 12}
    pi3 = [M(*a) for a in graded_monomials(2, 3)]
    assert same_span([p for p, g in zip(lb.basis, lb.degrees) if g <= 3], pi3, tol=1e-10)


@pytest.mark.parametrize("Z", [EXAMPLE1, THREE, CORNERS, [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]])
def test_dimension_by_degree_matches_rank(Z):
    lb = least_basis(Z)
    dims = dimension_by_degree(lb)
    for n, dim in dims.items():
        assert dim == rank_oracle(Z, n)


def test_example1_dimensions_by_degree():
    assert dimension_by_degree(least_basis(EXAMPLE1)) == {0: 1, 1: 3, 2: 5, 3: 6}


@st.composite
def configs(draw):
    N = draw(st.integers(1, 4))
    pts = np.array(draw(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=N, max_size=N)))
    if N > 1:
        dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(N) * 9
        assume(dist.min() > 0.2)
    if N >= 3:
        # stay away from near-collinear triples, where the space jumps
        for i, j, k in itertools.combinations(range(N), 3):
            u, v = pts[j] - pts[i], pts[k] - pts[i]
            assume(abs(u[0] * v[1] - u[1] * v[0]) > 0.05)
    return pts


@given(configs())
def test_regularity(Z):
    lb = least_basis(Z)
    HV = hermite_vandermonde(Z, degmax=lb.max_degree)
    # basis polynomials live in centred, unit-diameter coordinates
    Zs = (Z - lb.center) / lb.scale
    HVs = hermite_vandermonde(Zs, degmax=lb.max_degree)
    C = np.array([p.coefficients(HVs.monomials) for p in lb.basis]).T
    G = HVs.matrix @ C
    assert G.shape == (3 * len(Z), 3 * len(Z)) == (HV.shape[0], len(lb))
    rhs = np.random.default_rng(1).standard_normal(len(lb))
    sol = np.linalg.solve(G, rhs)
    assert np.max(np.abs(G @ sol - rhs)) < 1e-8
    assert np.isfinite(lb.cond)


@given(
    configs(),
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.tuples(st.floats(-3, 3), st.floats(-3, 3)),
)
def test_affine_covariance(Z, A, x0):
    A = np.asarray(A).reshape(2, 2)
    assume(abs(np.linalg.det(A)) > 0.3 and np.linalg.cond(A) < 10)
    lhs = least_basis(Z @ A.T + np.asarray(x0)).basis
    rhs = [P.compose_linear(A.T) for P in least_basis(Z).basis]
    assert same_span(lhs, rhs, tol=1e-8)


@given(configs(), st.randoms(use_true_random=False))
def test_permutation_keeps_degrees(Z, rnd):
    perm = list(range(len(Z)))
    rnd.shuffle(perm)
    a, b = least_basis(Z), least_basis(Z[perm])
    assert a.degrees == b.degrees
    assert same_span(a.basis, b.basis, tol=1e-8)


@given(configs())
def test_homogeneous_normalised(Z):
    lb = least_basis(Z)
    assert lb.basis[0] == Polynomial.constant(2)
    for P, g in zip(lb.basis, lb.degrees):
        assert P.is_homogeneous() and P.degree == g
        assert max(abs(c) for _, c in P.items()) == pytest.approx(1.0)


def test_b_orthogonalize_keeps_span():
    lb = least_basis(CORNERS)
    ob = b_orthogonalize(lb)
    assert is_b_orthogonal(ob.basis)
    assert same_span(lb.basis, ob.basis, tol=1e-10)


def test_extended_counts():
    assert len(extended_least_basis(THREE, [[0.5, 0.5]])) == 10
    lb = extended_least_basis(CORNERS, [[0.3, 0.2]])
    assert len(lb) == 13
    assert len(extended_least_basis(np.zeros((0, 2)), [[0.3, 0.2]])) == 1


def test_1d():
    lb = least_basis_1d(3)
    assert [str(p) for p in lb.basis] == ["1", "x", "x^2", "x^3", "x^4", "x^5"]
    with pytest.raises(ValueError):
        least_basis_1d(0)


def test_duplicates_rejected():
    with pytest.raises(DegenerateConfigurationError):
        least_basis([[0.0, 0.0], [0.0, 0.0]])

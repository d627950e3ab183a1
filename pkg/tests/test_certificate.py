import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from superres.certificate import (
    SingularSystemError,
    StructureError,
    check_nd,
    check_nd_limit,
    convergence_study,
    eta_v,
    eta_w,
    eta_w_gaussian_closed,
    eta_w_lowpass_1d,
    gaussian_closed_form_coefficients,
    lowpass_constant,
    odd_derivatives,
    solve_full_pivot,
)
from superres.kernels import GaussianKernel, GaussianMixtureKernel, LowpassKernel, NeuroDiscKernel
from superres.leastspace import least_basis

GAUSS = GaussianKernel()
NEURO = NeuroDiscKernel()
GMIX = GaussianMixtureKernel()

TRIANGLE = np.array([[-0.3, -0.2], [0.35, -0.1], [0.1, 0.4]])


def separated(pts, tol):
    if len(pts) < 2:
        return True
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(len(pts)) * 9
    return d.min() > tol


@st.composite
def gaussian_case(draw):
    N = draw(st.integers(1, 3))
    pts = np.array(draw(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=N, max_size=N)))
    assume(separated(pts, 0.3))
    return pts


def gram_by_partials(c):
    """Self inner product sum_ij c_i c_j P_i(d1) P_j(d2) Corr(a_i, a_j), entry by entry.

    Returns the sum and the sum of absolute terms, the scale against which
    rounding in a cancelling quadratic form is measured.
    """
    k = c.kernel
    total = scale = 0.0
    for ci, ai, Pi in zip(c.coef, c.anchors, c.ops):
        for cj, aj, Pj in zip(c.coef, c.anchors, c.ops):
            s = 0.0
            for a, pa in Pi.items():
                for b, pb in Pj.items():
                    s += pa * pb * float(k.partial(a, b, ai, aj))
            total += ci * cj * s
            scale += abs(ci * cj * s)
    return total, scale


def assert_gram_consistent(c):
    n2 = c.norm2()
    ref, scale = gram_by_partials(c)
    assert n2 > 0
    assert abs(n2 - ref) <= 1e-10 * max(scale, abs(ref))
    # ||p||^2 = sum_i c_i <phi_i, p> = coef . targets
    targets = np.array([t for _, _, t in c.constraints])
    assert abs(n2 - c.coef @ targets) <= 1e-10 * max(scale, abs(ref))


@given(gaussian_case(), st.floats(0.3, 1.0))
def test_gaussian_eta_v_constraints(Z, t):
    c = eta_v(GAUSS, Z, t)
    assert np.max(np.abs(c.constraint_residuals())) <= 1e-8
    assert_gram_consistent(c)


@given(gaussian_case())
def test_gaussian_eta_w_constraints(Z):
    c = eta_w(GAUSS, Z)
    assert np.max(np.abs(c.constraint_residuals())) <= 1e-8
    assert_gram_consistent(c)


@given(st.floats(-0.9, 0.9), st.floats(0.2, 1.0))
def test_neuro_pair_constraints(angle, r):
    z0 = NEURO.z0
    Z = z0 + 0.1 * r * np.array([[math.cos(angle), math.sin(angle)], [-math.cos(angle), -math.sin(angle)]])
    for c in (eta_v(NEURO, Z, 1.0), eta_w(NEURO, Z)):
        assert np.max(np.abs(c.constraint_residuals())) <= 1e-8
        assert_gram_consistent(c)


@given(st.floats(-1, 1), st.floats(0.5, 1.0))
def test_gmixture_pair_constraints(dm, ds):
    Z = GMIX.z0 + 0.2 * np.array([[0.0, 0.0], [dm, ds]])
    for c in (eta_v(GMIX, Z, 1.0), eta_w(GMIX, Z)):
        assert np.max(np.abs(c.constraint_residuals())) <= 1e-8


@pytest.mark.parametrize("fc", [1, 2, 3])
def test_lowpass_constraints(fc):
    k = LowpassKernel(fc=fc)
    Z = np.linspace(0, 0.6, fc + 1)[:-1] + 0.05
    for c in (eta_v(k, Z[:, None]), eta_w(k, Z[:, None])):
        assert np.max(np.abs(c.constraint_residuals())) <= 1e-8
        assert_gram_consistent(c)


def test_lowpass_constant_fc1_hand():
    # N = 1: eta = a C(x) + b C'(x) with C = (1 + 2 cos 2 pi x) / 3; eta(0) = 1 and
    # eta'(0) = 0 force a = 1, b = 0, so eta(1/2) = C(1/2) = 1 - lowpass_constant(1)
    eta_half = (1 + 2 * math.cos(math.pi)) / 3
    assert lowpass_constant(1) == pytest.approx(1 - eta_half, rel=1e-12)
    assert lowpass_constant(1) == pytest.approx(4 / 3, rel=1e-12)


def test_lowpass_constant_numeric_oracle():
    # C = (1 - eta_W(x)) / sin(pi x)^(2N) from an independent dense solve of the
    # 2N x 2N system built from the closed-form Fourier derivatives of the kernel
    for fc in (2, 3):
        n = 2 * fc
        ks = np.arange(-fc, fc + 1)
        w = 2j * np.pi * ks

        def dC(m, u):
            return float(np.real(np.sum(w**m * np.exp(w * u)))) / (2 * fc + 1)

        # atoms d^r/dz^r Corr(z, x) at z = 0 equal (-1)^r C^(r)(x)
        R = np.array([[(-1) ** r * dC(r + s, 0.0) for r in range(n)] for s in range(n)])
        coef = np.linalg.solve(R, np.eye(n)[0])
        x = 0.37
        eta = sum(coef[r] * (-1) ** r * dC(r, x) for r in range(n))
        assert lowpass_constant(fc) == pytest.approx((1 - eta) / math.sin(math.pi * x) ** n, rel=1e-9)


@pytest.mark.parametrize("fc", [1, 2, 3])
def test_lowpass_eta_w_formula(fc):
    k = LowpassKernel(fc=fc)
    x = np.arange(512) / 512
    W = eta_w(k, np.zeros((fc, 1)) + np.arange(fc)[:, None] * 0.01)
    assert np.max(np.abs(W(x[:, None]) - eta_w_lowpass_1d(fc, x))) <= 1e-8


@pytest.mark.parametrize("kernel", [GAUSS, LowpassKernel(fc=3)], ids=["gaussian2d", "lowpass"])
def test_odd_derivatives_vanish(kernel):
    Z = TRIANGLE if kernel.dim == 2 else np.array([[0.0], [0.1], [0.25]])
    W = eta_w(kernel, Z)
    odd = odd_derivatives(W, 5)
    assert max(abs(v) for v in odd.values()) < 1e-8


def test_gaussian_closed_form_example1():
    Z = [[0.0, 0.0], [0.0, 1.0]]
    lb = least_basis(Z)
    W = eta_w(GAUSS, Z)
    pts, _, _ = GAUSS.domain.grid(64)
    assert np.max(np.abs(W(pts) - eta_w_gaussian_closed(lb, pts, sigma=GAUSS.sigma))) <= 1e-8


@pytest.mark.parametrize("N", [1, 2, 3])
def test_gaussian_closed_form_aligned_display(N):
    # corrected display: exp(-|u|^2/2) sum_{j <= N-1} u1^(2j) / (2^j j!)
    Z = np.stack([np.arange(N) * 0.3, np.zeros(N)], axis=-1)
    lb = least_basis(Z)
    pts, _, _ = GAUSS.domain.grid(48)
    u = pts / (math.sqrt(2) * GAUSS.sigma)
    series = sum(u[:, 0] ** (2 * j) / (2**j * math.factorial(j)) for j in range(N))
    ref = np.exp(-0.5 * np.sum(u**2, axis=-1)) * series
    assert np.max(np.abs(eta_w_gaussian_closed(lb, pts, sigma=GAUSS.sigma) - ref)) <= 1e-12
    assert np.max(np.abs(eta_w(GAUSS, Z)(pts) - ref)) <= 1e-8


def test_closed_form_strict_structure():
    lb = least_basis([[0.0, 0.0], [0.0, 1.0]])
    F, ok = gaussian_closed_form_coefficients(lb)
    assert not ok
    with pytest.raises(StructureError):
        gaussian_closed_form_coefficients(lb, strict=True)
    _, ok = gaussian_closed_form_coefficients(least_basis([[0, 0], [1, 0], [0, 1]]), strict=True)
    assert ok


@given(gaussian_case(), st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_gaussian_reparameterization(Z, h):
    h = np.asarray(h)
    x = np.random.default_rng(0).uniform(-3, 3, size=(400, 2))
    a = eta_v(GAUSS, Z, 1.0)(x)
    b = eta_v(GAUSS, Z + h, 1.0)(x + h)
    assert np.max(np.abs(a - b)) <= 1e-10


@given(st.floats(0, 1))
def test_lowpass_reparameterization(h):
    k = LowpassKernel(fc=2)
    Z = np.array([[0.1], [0.3]])
    x = (np.arange(256) / 256)[:, None]
    a = eta_v(k, Z)(x)
    b = eta_v(k, k.domain.normalize_point(Z + h))(k.domain.normalize_point(x + h))
    assert np.max(np.abs(a - b)) <= 1e-10


def test_lowpass_eta_v_below_one():
    k = LowpassKernel(fc=3)
    V = eta_v(k, np.array([[0.1], [0.4], [0.7]]))
    rep = check_nd(V, grid=4096)
    assert rep.sup_away < 1 and rep.verdict == "nondegenerate"


def test_nd_pair_gaussian():
    rep = check_nd(eta_w(GAUSS, [[0.1, -0.2], [0.5, 0.6]]), grid=128)
    assert rep.verdict == "nondegenerate"
    assert max(rep.pair_eigs) < 0


def test_neuro_triangle_is_inconsistent():
    Z = NEURO.z0 + 0.1 * TRIANGLE
    with pytest.raises(SingularSystemError) as err:
        eta_w(NEURO, Z)
    assert err.value.rank == 7 and not err.value.consistent
    rep = check_nd_limit(NEURO, Z, grid=64)
    assert rep.verdict == "degenerate_sup" and rep.singular
    sups = [p[1] for p in rep.probes]
    assert all(b > a for a, b in zip(sups, sups[1:]))


def test_convergence_rate():
    tab = convergence_study(GAUSS, [[0.1, -0.2], [0.5, 0.6]], [1, 0.5, 0.2, 0.1, 0.05], grid=48)
    assert 0.8 <= tab.slope <= 1.5


def test_solve_full_pivot_flags():
    G = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularSystemError) as err:
        solve_full_pivot(G, np.array([1.0, 0.0]))
    assert not err.value.consistent
    x, cond = solve_full_pivot(np.diag([1.0, 1e-3]), np.array([1.0, 1.0]))
    assert np.allclose(x, [1, 1e3]) and cond == pytest.approx(1e3)


def test_eta_v_rejects_nonpositive_t():
    with pytest.raises(ValueError):
        eta_v(GAUSS, TRIANGLE, 0.0)

import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from superres.blasso import (
    Observation,
    SolveOptions,
    SpikeMeasure,
    fw_solve,
    make_observation,
    noise_measure,
    objective,
    residual_correlation,
    support_errors,
)
from superres.kernels import GaussianKernel, LowpassKernel

GAUSS = GaussianKernel()
LOWPASS = LowpassKernel(fc=4)


@st.composite
def lowpass_problem(draw):
    n = draw(st.integers(1, 3))
    pos = sorted(draw(st.lists(st.floats(0, 1, exclude_max=True), min_size=n, max_size=n)))
    gaps = np.diff(np.r_[pos, pos[0] + 1])
    assume(np.min(gaps) > 0.15)
    amps = draw(st.lists(st.floats(0.3, 2.0), min_size=n, max_size=n))
    signs = draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=n, max_size=n))
    lam = draw(st.floats(1e-3, 1e-1))
    seed = draw(st.integers(0, 2**16))
    return np.array(pos)[:, None], np.array(amps) * np.array(signs), lam, seed


def check_monotone(trace):
    for r in trace.records:
        if "objective_after_refine" in r:
            before, after = r["objective_before_refine"], r["objective_after_refine"]
            assert after <= before + 1e-12 * max(1.0, abs(before))


@given(lowpass_problem())
def test_refinement_monotone_lowpass(problem):
    Z, a, lam, seed = problem
    obs = make_observation(LOWPASS, Z, a, 1.0, lam, seed)
    m, trace = fw_solve(obs, lam, SolveOptions(grid=256))
    check_monotone(trace)
    if trace.reason == "certificate":
        pts = (np.arange(256) / 256)[:, None]
        assert np.max(np.abs(residual_correlation(obs, m, lam, pts))) <= 1 + 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_refinement_monotone_gaussian(seed):
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1.5, 1.5, size=(3, 2))
    obs = make_observation(GAUSS, Z, rng.uniform(0.5, 1.5, 3), 1.0, 1e-2, seed)
    opts = SolveOptions(grid=64)
    m, trace = fw_solve(obs, 1e-2, opts)
    check_monotone(trace)
    if trace.reason == "certificate":
        pts, mask, _ = GAUSS.domain.grid(64)
        assert np.max(np.abs(residual_correlation(obs, m, 1e-2, pts[mask]))) <= 1 + opts.eps


def test_exactness():
    Z = np.array([[-1.5, -1.0], [1.5, -0.5], [0.0, 1.6]])
    truth = SpikeMeasure(Z, [1.0, 0.7, 1.3])
    obs = Observation(GAUSS, truth)
    lam = 1e-8 * obs.y_norm2
    m, trace = fw_solve(obs, lam, SolveOptions(grid=96))
    assert trace.reason == "certificate"
    pos, amp = support_errors(m, truth)
    diam = np.max(np.linalg.norm(Z[:, None] - Z[None], axis=-1))
    assert pos <= 1e-4 * diam
    assert amp <= 1e-3 * np.min(np.abs(truth.amplitudes))


def test_determinism(monkeypatch):
    monkeypatch.setenv("SUPERRES_THREADS", "1")
    Z = np.array([[-0.3, 0.2], [0.4, -0.1]])

    def run():
        obs = make_observation(GAUSS, Z, [1.0, 1.0], 1.0, 1e-2, seed=7)
        m, trace = fw_solve(obs, 1e-2, SolveOptions(grid=64))
        return json.dumps({"m": m.to_json(), "trace": trace.to_json()})

    assert run() == run()


@pytest.mark.parametrize("c", [0.25, 3.0])
def test_scaling_consistency(c):
    Z = np.array([[-1.0, 0.5], [1.2, -0.3]])
    a = np.array([1.0, 0.8])
    lam = 1e-2
    o1 = make_observation(GAUSS, Z, a, 1.0, lam, seed=2)
    o2 = make_observation(GAUSS, Z, c * a, 1.0, c * lam, seed=2)
    o2.noise_gain = c * o1.noise_gain
    m1, _ = fw_solve(o1, lam, SolveOptions(grid=64))
    m2, _ = fw_solve(o2, c * lam, SolveOptions(grid=64))
    assert len(m1) == len(m2)
    assert np.max(np.abs(m1.positions - m2.positions)) <= 1e-8
    assert np.max(np.abs(c * m1.amplitudes - m2.amplitudes)) <= 1e-8 * c


def test_objective_empty_measure():
    obs = Observation(GAUSS, SpikeMeasure([[0.0, 0.0]], [2.0]))
    assert objective(obs, SpikeMeasure.empty(2), 0.5) == pytest.approx(obs.y_norm2 / 1.0)
    assert obs.y_norm2 == pytest.approx(4.0)


def test_measure_helpers():
    m = SpikeMeasure([[0.0, 0.0], [1e-9, 0.0], [1.0, 1.0], [2.0, 2.0]], [1.0, 1.0, 0.0, -2.0])
    assert m.tv_norm == 4.0
    merged = m.pruned().merged(1e-6)
    assert len(merged) == 2
    assert merged.amplitudes[0] == 2.0
    back = SpikeMeasure.from_json(merged.to_json())
    assert np.array_equal(back.positions, merged.positions)
    assert support_errors(merged, m) == (float("inf"), float("inf"))


def test_noise_measure_seeded():
    a = noise_measure(3, domain=GAUSS.domain)
    b = noise_measure(3, domain=GAUSS.domain)
    assert len(a) == 20
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.amplitudes, b.amplitudes)


def test_noise_ratio():
    obs = make_observation(GAUSS, [[0.1, 0.2]], [1.0], 1.0, 1e-3, seed=0, noise_ratio=0.1)
    assert obs.noise_norm == pytest.approx(1e-4, rel=1e-10)


def test_bad_lambda():
    obs = Observation(GAUSS, SpikeMeasure([[0.0, 0.0]], [1.0]))
    with pytest.raises(ValueError):
        fw_solve(obs, 0.0)

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from superres.config import DEFAULT_SPIKES, ConfigError, ExperimentConfig, load_spikes

pos_float = st.floats(1e-6, 1e3, allow_nan=False)


@st.composite
def configs(draw):
    name = draw(st.sampled_from(sorted(DEFAULT_SPIKES)))
    kernel = {"name": name}
    if name == "gaussian2d" and draw(st.booleans()):
        kernel["sigma"] = draw(pos_float)
    if name == "lowpass_torus" and draw(st.booleans()):
        kernel["fc"] = draw(st.integers(1, 6))
    dim = 1 if name == "lowpass_torus" else 2
    n = draw(st.integers(1, 5))
    pts = draw(st.one_of(
        st.none(),
        st.lists(st.lists(st.floats(-1, 1), min_size=dim, max_size=dim), min_size=n, max_size=n),
    ))
    amps = None if pts is None else draw(st.one_of(st.none(), st.lists(st.floats(-5, 5), min_size=n, max_size=n)))
    return ExperimentConfig(
        kernel=kernel,
        spikes={"positions": pts, "amplitudes": amps},
        t=draw(pos_float),
        lam=draw(pos_float),
        lambdas=draw(st.one_of(st.none(), st.lists(pos_float, min_size=1, max_size=5))),
        t_list=draw(st.lists(pos_float, min_size=1, max_size=7)),
        seed=draw(st.integers(0, 2**31)),
        grid=draw(st.integers(4, 512)),
        out=draw(st.text(min_size=1, max_size=12)),
        nonneg=draw(st.booleans()),
        max_iters=draw(st.integers(1, 100)),
        noise_ratio=draw(st.one_of(st.none(), st.floats(0, 10))),
        sweep_c=draw(pos_float),
    )


@given(configs())
def test_roundtrip(cfg):
    text = cfg.to_json()
    again = ExperimentConfig.from_json(text)
    assert again == cfg
    assert again.to_json() == text


def test_defaults_documented():
    cfg = ExperimentConfig.from_json("{}")
    assert cfg == ExperimentConfig()
    import superres.config as mod

    for key in cfg.to_dict():
        assert f"\n{key} :" in mod.__doc__, key


@pytest.mark.parametrize("text", [
    "{", "[]", '{"bogus": 1}', '{"lam": 1}', '{"lambda": -1}', '{"kernel": {"name": "x"}}',
    '{"t": 0}', '{"grid": 2.5}', '{"spikes": {"positions": [[0, 0]], "amplitudes": [1, 2]}}',
    '{"t": "fast"}',
])
def test_rejects(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(text)


def test_load_spikes():
    assert load_spikes("[[0, 1]]") == {"positions": [[0, 1]], "amplitudes": None}
    assert load_spikes('{"positions": [[0, 1]], "amplitudes": [2]}')["amplitudes"] == [2]
    with pytest.raises(ConfigError):
        load_spikes('{"where": 1}')
    with pytest.raises(ConfigError):
        load_spikes("not json")


def test_replace_and_kernel():
    cfg = ExperimentConfig().replace(lam=0.5, kernel={"name": "lowpass_torus", "fc": 3})
    assert json.loads(cfg.to_json())["lambda"] == 0.5
    assert cfg.make_kernel().fc == 3
    assert cfg.positions().shape == (2, 1)
    with pytest.raises(ConfigError):
        ExperimentConfig(kernel={"name": "gaussian2d", "nope": 1}).make_kernel()

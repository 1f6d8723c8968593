import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lilchain import ArKernel, ExperimentConfig, FiniteKernel, IfsKernel
from lilchain.config import ALL_CHECKS, load_kernel_file
from lilchain.errors import ConfigError

BASE = """
[kernel]
type = finite
matrix = 0.9 0.1; 0.2 0.8

[observable]
type = table
values = 1, -2
"""


def test_demo_configs_load(config_path):
    kinds = {"two_state.cfg": FiniteKernel, "ifs.cfg": IfsKernel, "ar.cfg": ArKernel,
             "zero.cfg": FiniteKernel}
    for name, cls in kinds.items():
        cfg = ExperimentConfig.load(config_path(name))
        assert isinstance(cfg.build_kernel(), cls)
        assert isinstance(load_kernel_file(config_path(name)), cls)


def test_roundtrip_demo_configs(config_path):
    for name in os.listdir(os.path.dirname(config_path("x"))):
        cfg = ExperimentConfig.load(config_path(name))
        back = ExperimentConfig.from_text(cfg.to_text())
        assert back == cfg and back.hash == cfg.hash
        assert back.to_text() == cfg.to_text()


@given(seed=st.integers(0, 2 ** 31), n_max=st.integers(1, 10 ** 8),
       eps=st.lists(st.floats(0.01, 10.0), min_size=1, max_size=4),
       enabled=st.lists(st.sampled_from(ALL_CHECKS), unique=True),
       delta=st.floats(0.01, 4.0), override=st.booleans())
def test_roundtrip_property(seed, n_max, eps, enabled, delta, override):
    cfg = ExperimentConfig.from_text(BASE)
    import dataclasses
    cfg = dataclasses.replace(cfg, seed=seed, n_max=n_max, eps=eps, enabled=enabled,
                              delta=delta, override=override)
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.hash == cfg.hash


def test_hash_changes_with_seed():
    a = ExperimentConfig.from_text(BASE)
    b = ExperimentConfig.from_text(BASE + "\n[experiment]\nseed = 1\n")
    assert a.hash != b.hash


@pytest.mark.parametrize("extra,match", [
    ("[experiment]\nn_max = 0\n", "n_max"),
    ("[experiment]\ndelta = -1\n", "delta"),
    ("[experiment]\nbogus = 1\n", "unknown keys"),
    ("[plots]\nx = 1\n", "unknown sections"),
    ("[checks]\nenabled = e1, e9\n", "unknown checks"),
    ("[experiment]\nseed = abc\n", "bad value"),
    ("[checks]\ntol = 0\n", "unknown keys"),
])
def test_invalid_configs(extra, match):
    with pytest.raises(ConfigError, match=match):
        ExperimentConfig.from_text(BASE + "\n" + extra)


def test_missing_sections():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("[kernel]\ntype = finite\nmatrix = 1\n")


def test_numeric_literals():
    cfg = ExperimentConfig.from_text(BASE + "\n[experiment]\nn_max = 1e7\n")
    assert cfg.n_max == 10_000_000 and isinstance(cfg.n_max, int)


def test_centering_option():
    cfg = ExperimentConfig.from_text(BASE.replace("values = 1, -2", "values = 2, -1\ncenter = true"))
    k = cfg.build_kernel()
    psi = cfg.build_observable(k)
    import numpy as np
    assert np.allclose(psi(np.array([0, 1])), [1.0, -2.0])

"""Controller parameter counts, feature assembly, and output bounds."""
import numpy as np
import pytest

from minidream.controller import (ControllerConfig, FEATURE_MODES, act,
                                  build_features, feature_dim)
from minidream.envs.base import ActionSpec
from minidream.mdnrnn import RnnState
from minidream.vae import LatentCode


def test_reference_parameter_counts():
    # car: 32 latent + 256 hidden features -> 3 actions, linear with bias
    assert ControllerConfig(32 + 256, 3).param_count == 867
    # hidden-layer ablation: 32 latent features, 40 tanh units, 3 actions
    assert ControllerConfig(32, 3, hidden=40).param_count == 1443
    # survival task: 64 latent + 512 hidden + 512 cell -> 1 action
    assert ControllerConfig(64 + 2 * 512, 1, use_bias=False).param_count == 1088
    # with a bias the same shape costs one extra parameter
    assert ControllerConfig(64 + 2 * 512, 1, use_bias=True).param_count == 1089


def test_feature_dim_and_order():
    assert feature_dim("z_only", 4, 6) == 4
    assert feature_dim("z_h", 4, 6) == 10
    assert feature_dim("z_h_c", 4, 6) == 16
    latent = LatentCode(mu=np.zeros(2), sigma=np.ones(2), z=np.array([1.0, 2.0]))
    state = RnnState(h=np.array([3.0]), c=np.array([4.0]))
    assert np.array_equal(build_features(latent, state, "z_only"), [1, 2])
    assert np.array_equal(build_features(latent, state, "z_h"), [1, 2, 3])
    assert np.array_equal(build_features(latent, state, "z_h_c"), [1, 2, 3, 4])


def test_unknown_mode_and_missing_state_rejected():
    latent = LatentCode(np.zeros(2), np.ones(2), np.zeros(2))
    with pytest.raises(ValueError, match="z_only"):
        build_features(latent, None, "nope")
    with pytest.raises(ValueError, match="RNN state"):
        build_features(latent, None, "z_h")


@pytest.mark.parametrize("hidden", [None, 5])
def test_actions_respect_bounds(hidden):
    spec = ActionSpec(3, [(-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)])
    cfg = ControllerConfig(7, 3, hidden=hidden)
    g = np.random.default_rng(0)
    for _ in range(200):
        a = act(g.standard_normal(7), g.standard_normal(cfg.param_count) * 10,
                cfg, spec)
        for (lo, hi), v in zip(spec.bounds, a):
            assert lo <= v <= hi


def test_zero_params_give_bound_midpoints():
    spec = ActionSpec(2, [(-1.0, 1.0), (0.0, 1.0)])
    cfg = ControllerConfig(3, 2)
    a = act(np.ones(3), np.zeros(cfg.param_count), cfg, spec)
    assert np.allclose(a, [0.0, 0.5])


def test_param_vector_length_enforced():
    spec = ActionSpec(1, [(-1.0, 1.0)])
    cfg = ControllerConfig(4, 1)
    with pytest.raises(ValueError, match="params"):
        act(np.zeros(4), np.zeros(cfg.param_count + 1), cfg, spec)
    with pytest.raises(ValueError, match="features"):
        act(np.zeros(5), np.zeros(cfg.param_count), cfg, spec)


def test_act_is_deterministic():
    spec = ActionSpec(2, [(-1.0, 1.0), (0.0, 1.0)])
    cfg = ControllerConfig(6, 2, hidden=4)
    g = np.random.default_rng(1)
    f, p = g.standard_normal(6), g.standard_normal(cfg.param_count)
    assert np.array_equal(act(f, p, cfg, spec), act(f, p, cfg, spec))

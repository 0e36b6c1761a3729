"""Policy: a linear (optionally one-hidden-layer) map from features to actions.

Parameters live in one flat vector so the evolution strategy can treat the
policy as a point in R^n. Outputs pass through tanh and are rescaled per
dimension to the environment's action bounds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from minidream.envs.base import ActionSpec
from minidream.mdnrnn import RnnState
from minidream.vae import LatentCode

FEATURE_MODES = ("z_only", "z_h", "z_h_c")


@dataclass
class ControllerConfig:
    feature_dim: int
    action_dim: int
    hidden: Optional[int] = None   # width of the optional tanh hidden layer
    use_bias: bool = True

    @property
    def param_count(self) -> int:
        b = 1 if self.use_bias else 0
        if self.hidden is None:
            return (self.feature_dim + b) * self.action_dim
        return (self.feature_dim + b) * self.hidden + (self.hidden + b) * self.action_dim

    def to_dict(self) -> Dict:
        return {"feature_dim": self.feature_dim, "action_dim": self.action_dim,
                "hidden": self.hidden, "use_bias": self.use_bias}

    @classmethod
    def from_dict(cls, d: Dict) -> "ControllerConfig":
        return cls(**d)


def build_features(latent: LatentCode, state: Optional[RnnState],
                   mode: str) -> np.ndarray:
    """Concatenation order is fixed: [z, h, c]."""
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}, expected one of {FEATURE_MODES}")
    if mode == "z_only":
        return latent.z
    if state is None:
        raise ValueError(f"feature mode {mode!r} requires an RNN state")
    if mode == "z_h":
        return np.concatenate([latent.z, state.h])
    return np.concatenate([latent.z, state.h, state.c])


def feature_dim(mode: str, n_z: int, n_hidden: int) -> int:
    return {"z_only": n_z, "z_h": n_z + n_hidden,
            "z_h_c": n_z + 2 * n_hidden}[mode]


def act(features: np.ndarray, params: np.ndarray, config: ControllerConfig,
        spec: ActionSpec) -> np.ndarray:
    """a = tanh(W f + b), affinely rescaled to the action bounds."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (config.feature_dim,):
        raise ValueError(f"expected {config.feature_dim} features, got {features.shape}")
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (config.param_count,):
        raise ValueError(f"expected {config.param_count} params, got {params.shape}")
    if spec.dimension != config.action_dim:
        raise ValueError(f"controller action_dim {config.action_dim} != "
                         f"env action dim {spec.dimension}")
    b = 1 if config.use_bias else 0
    off = 0

    def layer(x, n_in, n_out):
        nonlocal off
        w = params[off:off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        y = w @ x
        if b:
            y = y + params[off:off + n_out]
            off += n_out
        return y

    if config.hidden is None:
        a = np.tanh(layer(features, config.feature_dim, config.action_dim))
    else:
        hid = np.tanh(layer(features, config.feature_dim, config.hidden))
        a = np.tanh(layer(hid, config.hidden, config.action_dim))
    lo = np.array([bound[0] for bound in spec.bounds])
    hi = np.array([bound[1] for bound in spec.bounds])
    return lo + (a + 1.0) * 0.5 * (hi - lo)

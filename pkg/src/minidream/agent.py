"""Full-agent rollouts in the real pixel environments.

Per step: encode the frame, act on [z, h(, c)], step the environment, then
advance the dynamics model's recurrent state with (z_t, a_t). The recurrent
state fed to the controller is therefore the model's summary of the past,
not of the current frame.
"""
from __future__ import annotations

from typing import List, Optional

import numpy as np

from minidream.controller import ControllerConfig, act, build_features
from minidream.envs.base import PixelEnv
from minidream.mdnrnn import MdnRnn, RnnState
from minidream.rng import RngStream
from minidream.vae import ConvVae


def run_real_rollout(env: PixelEnv, vae: ConvVae, mdnrnn: Optional[MdnRnn],
                     params: np.ndarray, ctrl_cfg: ControllerConfig,
                     mode: str, seed: int,
                     max_steps: Optional[int] = None) -> float:
    enc_rng = RngStream(seed, "agent-encode")
    obs = env.reset(seed)
    state = RnnState.zeros(mdnrnn.cfg.n_hidden) if mdnrnn is not None else None
    total = 0.0
    steps = 0
    while True:
        latent = vae.encode(obs, enc_rng)
        features = build_features(latent, state, mode)
        action = act(features, params, ctrl_cfg, env.action_spec)
        if mdnrnn is not None:
            _, state = mdnrnn.rnn_step(latent.z, action, state)
        result = env.step(action)
        total += result.reward
        obs = result.observation
        steps += 1
        if result.done or (max_steps is not None and steps >= max_steps):
            return total


def run_random_policy(env: PixelEnv, seed: int) -> float:
    rng = RngStream(seed, "random-policy")
    env.reset(seed)
    total = 0.0
    while True:
        result = env.step(env.action_spec.sample(rng))
        total += result.reward
        if result.done:
            return total


def evaluate_returns(rollout_fn, n_rollouts: int, seed: int) -> List[float]:
    """rollout_fn(seed) -> return; seeds derived from one stream."""
    root = RngStream(seed, "evaluate")
    return [float(rollout_fn(int(root.substream(f"rollout-{i}").integers(0, 2 ** 63))))
            for i in range(n_rollouts)]

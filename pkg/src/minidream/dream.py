"""The generated ("dream") environment: the dynamics model wrapped in the
same reset/step interface as the real environments, stepping entirely in
latent space.

Reset draws z from the posterior (mu, sigma) of a uniformly chosen initial
frame from the latent dataset; each step samples z_{t+1} from the mixture
head at temperature tau and terminates by sampling the temperature-adjusted
predicted-done probability (or at the step cap). Low tau therefore sharpens
the done logit toward its dominant side, suppressing rare death events —
the discrete-event analog of mixture mode collapse. Reward is +1 per
surviving step (the survival tasks are the only ones trained in here; the
model predicts no reward signal).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from minidream.agent import run_real_rollout
from minidream.controller import ControllerConfig, act, build_features
from minidream.envs.base import ActionSpec, EnvError
from minidream.latents import LatentEpisode
from minidream.mdnrnn import MdnRnn, RnnState, sample_z
from minidream.rng import RngStream
from minidream.vae import LatentCode


@dataclass
class DreamStepResult:
    z: np.ndarray
    state: RnnState
    reward: float
    done: bool


class DreamEnv:
    """Latent-space environment generated by a trained dynamics model."""

    env_id = "dream"

    def __init__(self, mdnrnn: MdnRnn, initial_pool: List[LatentEpisode],
                 action_spec: ActionSpec, tau: float = 1.0,
                 max_steps: int = 2100):
        if tau <= 0:
            raise ValueError(f"temperature must be > 0, got {tau}")
        if not initial_pool:
            raise ValueError("empty initial-state pool")
        self.m = mdnrnn
        # episode starts are the distribution reset must imitate
        self.pool = [(ep.mu[0], ep.sigma[0]) for ep in initial_pool]
        self.action_spec = action_spec
        self.tau = tau
        self.max_steps = max_steps
        self._done = True
        self._step = 0

    def reset(self, seed: int) -> np.ndarray:
        self._rng = RngStream(seed, "dream")
        mu0, sigma0 = self.pool[self._rng.choice(len(self.pool))]
        self.z = mu0 + sigma0 * self._rng.normal(mu0.shape[0])
        self.state = RnnState.zeros(self.m.cfg.n_hidden)
        self._step = 0
        self._done = False
        return self.z

    def step(self, action) -> DreamStepResult:
        if self._done:
            raise EnvError("dream: step() after done; call reset()")
        action, _ = self.action_spec.clip(action)
        out, self.state = self.m.rnn_step(self.z, action, self.state)
        self.z = sample_z(out, self.tau, self._rng)
        self._step += 1
        died = False
        if self.m.cfg.predict_done:
            # sample termination from the temperature-adjusted probability:
            # sigmoid(logit / tau) -> near-deterministic at low tau
            p = 1.0 / (1.0 + np.exp(-out.done_logit / self.tau))
            died = bool(self._rng.uniform() < p)
        self._done = died or self._step >= self.max_steps
        reward = 0.0 if died else 1.0
        return DreamStepResult(self.z, self.state, reward, self._done)


def run_dream_rollout(dream: DreamEnv, params: np.ndarray,
                      ctrl_cfg: ControllerConfig, mode: str, seed: int) -> float:
    z = dream.reset(seed)
    total = 0.0
    while True:
        latent = LatentCode(mu=z, sigma=np.ones_like(z), z=z)
        features = build_features(latent, dream.state, mode)
        action = act(features, params, ctrl_cfg, dream.action_spec)
        result = dream.step(action)
        total += result.reward
        z = result.z
        if result.done:
            return total


def transfer_evaluate(params: np.ndarray, ctrl_cfg: ControllerConfig, mode: str,
                      vae, mdnrnn, env_factory, n_rollouts: int, seed: int,
                      histogram_path=None, config_hash: str = "") -> dict:
    """Deploy a (dream-trained) controller in the real environment."""
    root = RngStream(seed, "transfer")
    returns = []
    for i in range(n_rollouts):
        env = env_factory()
        s = int(root.substream(f"rollout-{i}").integers(0, 2 ** 63))
        returns.append(run_real_rollout(env, vae, mdnrnn, params, ctrl_cfg, mode, s))
    returns = np.asarray(returns)
    if histogram_path is not None:
        with open(histogram_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["config_hash", "rollout", "return"])
            for i, r in enumerate(returns):
                w.writerow([config_hash, i, f"{r:.6f}"])
    return {"mean": float(returns.mean()), "std": float(returns.std()),
            "returns": [float(r) for r in returns]}

"""Random-policy data collection (step 1 of the training procedure)."""
from __future__ import annotations

from typing import List, Optional

import numpy as np

from minidream.envs.base import EpisodeRecord, PixelEnv
from minidream.envs.episode_io import save_episodes
from minidream.rng import RngStream


def _f32(x):
    """Quantize to float32 precision so records round-trip the episode file."""
    return np.asarray(x, dtype="<f4").astype(np.float64)

# paper-scale default; the desk presets use far fewer
DEFAULT_N_ROLLOUTS = 10_000


def run_random_episode(env: PixelEnv, seed: int, action_repeat: int = 1) -> EpisodeRecord:
    rng = RngStream(seed, "random-policy")
    obs = env.reset(seed)
    record = EpisodeRecord(env.env_id, seed, [obs], [], [], [])
    action = None
    steps_held = 0
    done = False
    while not done:
        if action is None or steps_held >= action_repeat:
            action = _f32(env.action_spec.sample(rng))
            steps_held = 0
        result = env.step(action)
        steps_held += 1
        record.frames.append(result.observation)
        record.actions.append(action.copy())
        record.rewards.append(float(_f32(result.reward)))
        record.dones.append(result.done)
        done = result.done
    record.validate()
    return record


def collect_random_rollouts(env: PixelEnv, n_rollouts: int, seed: int,
                            action_repeat: int = 1,
                            out_path: Optional[str] = None) -> List[EpisodeRecord]:
    if n_rollouts < 1:
        raise ValueError(f"n_rollouts must be >= 1, got {n_rollouts}")
    root = RngStream(seed, "collect")
    episodes = []
    for i in range(n_rollouts):
        ep_seed = int(root.substream(f"episode-{i}").integers(0, 2 ** 63))
        episodes.append(run_random_episode(env, ep_seed, action_repeat))
    if out_path is not None:
        save_episodes(out_path, episodes)
    return episodes

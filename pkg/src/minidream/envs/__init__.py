from minidream.envs.base import ActionSpec, EnvError, EpisodeRecord, PixelEnv, StepResult
from minidream.envs.dodgeworld import DodgeWorld, DodgeWorldConfig
from minidream.envs.episode_io import load_episodes, save_episodes
from minidream.envs.rollout import collect_random_rollouts, run_random_episode
from minidream.envs.trackworld import TrackWorld, TrackWorldConfig

__all__ = [
    "ActionSpec", "EnvError", "EpisodeRecord", "PixelEnv", "StepResult",
    "TrackWorld", "TrackWorldConfig", "DodgeWorld", "DodgeWorldConfig",
    "load_episodes", "save_episodes",
    "collect_random_rollouts", "run_random_episode",
]

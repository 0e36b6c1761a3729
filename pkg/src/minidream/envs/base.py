"""Environment interface shared by the real pixel worlds and the dream world."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np


class EnvError(RuntimeError):
    pass


@dataclass
class ActionSpec:
    dimension: int
    bounds: List[Tuple[float, float]]

    def __post_init__(self):
        assert len(self.bounds) == self.dimension
        for lo, hi in self.bounds:
            assert lo < hi, f"degenerate action bound [{lo}, {hi}]"

    def clip(self, action: np.ndarray) -> Tuple[np.ndarray, bool]:
        action = np.asarray(action, dtype=np.float64).reshape(self.dimension)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        clipped = np.clip(action, lo, hi)
        return clipped, bool(np.any(clipped != action))

    def sample(self, rng) -> np.ndarray:
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return rng.uniform(lo, hi, size=self.dimension)


@dataclass
class StepResult:
    observation: np.ndarray  # (H, W, 3) float64 in [0, 1]
    reward: float
    done: bool
    step_index: int


@dataclass
class EpisodeRecord:
    """One rollout: T frames, T-1 transitions."""
    env_id: str
    seed: int
    frames: List[np.ndarray]
    actions: List[np.ndarray]
    rewards: List[float]
    dones: List[bool]

    def validate(self):
        t = len(self.frames)
        if not (len(self.actions) == t - 1 == len(self.rewards) == len(self.dones)):
            raise ValueError(
                f"inconsistent episode lengths: {t} frames, {len(self.actions)} actions, "
                f"{len(self.rewards)} rewards, {len(self.dones)} dones")

    @property
    def ret(self) -> float:
        return float(sum(self.rewards))


class PixelEnv:
    """reset/step with done latching and out-of-bounds action clipping."""

    env_id: str = "base"
    action_spec: ActionSpec

    def __init__(self):
        self._done = True
        self._step_index = 0
        self.clip_warnings = 0

    def reset(self, seed: int) -> np.ndarray:
        self._done = False
        self._step_index = 0
        return self._reset(seed)

    def step(self, action) -> StepResult:
        if self._done:
            raise EnvError(f"{self.env_id}: step() after done; call reset()")
        action, clipped = self.action_spec.clip(action)
        if clipped:
            self.clip_warnings += 1
        obs, reward, done = self._step(action)
        self._step_index += 1
        self._done = done
        return StepResult(obs, reward, done, self._step_index)

    # subclasses implement:
    def _reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def _step(self, action: np.ndarray):
        raise NotImplementedError

"""DodgeWorld: survive falling projectiles fired by spawners along the top.

The scalar action in [-1, 1] is split into thirds: move left, stay, move
right. Each surviving step is worth +1; the episode ends on projectile
contact or at max_steps. Spawning is a seeded Bernoulli event per spawner
per step, the discrete randomness the mixture output head exists to model.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from minidream.envs.base import ActionSpec, PixelEnv
from minidream.rng import RngStream

BACKGROUND = np.array([20, 20, 46], dtype=np.float64) / 255.0
AGENT = np.array([102, 178, 255], dtype=np.float64) / 255.0
SPAWNER = np.array([51, 153, 51], dtype=np.float64) / 255.0
PROJECTILE = np.array([255, 128, 0], dtype=np.float64) / 255.0


@dataclass
class DodgeWorldConfig:
    size: int = 64
    max_steps: int = 2100
    n_spawners: int = 3
    spawn_prob: float = 0.04       # per spawner per step, after cooldown
    cooldown: int = 18
    projectile_vy: float = 0.022   # fraction of arena height per step
    aim_spread: float = 0.3        # horizontal aim error, arena widths
    agent_speed: float = 0.035
    agent_y: float = 0.88
    hit_radius: float = 0.055


class DodgeWorld(PixelEnv):
    env_id = "dodgeworld"

    def __init__(self, config: DodgeWorldConfig | None = None):
        super().__init__()
        self.cfg = config or DodgeWorldConfig()
        self.action_spec = ActionSpec(1, [(-1.0, 1.0)])
        s = self.cfg.size
        self._px = np.arange(s, dtype=np.float64)[None, :]
        self._py = np.arange(s, dtype=np.float64)[:, None]
        if self.cfg.n_spawners > 0:
            self.spawner_x = (np.arange(self.cfg.n_spawners) + 0.5) / self.cfg.n_spawners
        else:
            self.spawner_x = np.zeros(0)

    def _reset(self, seed: int) -> np.ndarray:
        self._rng = RngStream(seed, "dodgeworld")
        self.agent_x = 0.5
        self.projectiles: List[np.ndarray] = []  # rows of (x, y, vx, vy)
        self._cool = np.zeros(self.cfg.n_spawners, dtype=int)
        return self._render()

    def _step(self, action: np.ndarray):
        cfg = self.cfg
        a = float(action[0])
        if a < -1.0 / 3.0:
            self.agent_x -= cfg.agent_speed
        elif a > 1.0 / 3.0:
            self.agent_x += cfg.agent_speed
        self.agent_x = float(np.clip(self.agent_x, 0.05, 0.95))

        # advance projectiles, drop the ones that left the arena
        self.projectiles = [p + np.array([p[2], p[3], 0.0, 0.0])
                            for p in self.projectiles]
        self.projectiles = [p for p in self.projectiles if p[1] <= 1.05]

        # spawn: aimed at the agent's current position with seeded spread
        for i in range(cfg.n_spawners):
            if self._cool[i] > 0:
                self._cool[i] -= 1
                continue
            if self._rng.uniform() < cfg.spawn_prob:
                target = self.agent_x + cfg.aim_spread * (self._rng.uniform() - 0.5)
                steps_to_bottom = (cfg.agent_y - 0.05) / cfg.projectile_vy
                vx = (target - self.spawner_x[i]) / steps_to_bottom
                self.projectiles.append(
                    np.array([self.spawner_x[i], 0.05, vx, cfg.projectile_vy]))
                self._cool[i] = cfg.cooldown

        hit = any(abs(p[0] - self.agent_x) < cfg.hit_radius
                  and abs(p[1] - cfg.agent_y) < cfg.hit_radius
                  for p in self.projectiles)
        done = hit or (self._step_index + 1 >= cfg.max_steps)
        reward = 0.0 if hit else 1.0
        return self._render(), reward, done

    def _render(self) -> np.ndarray:
        cfg = self.cfg
        s = cfg.size
        img = np.empty((s, s, 3), dtype=np.float64)
        img[:] = BACKGROUND
        block = max(1, s // 16)
        for x in self.spawner_x:
            cx = int(x * s)
            img[0:block, max(0, cx - block // 2):cx + block // 2 + 1] = SPAWNER
        rr = max(1.0, 0.03 * s)
        for p in self.projectiles:
            cx, cy = p[0] * s, p[1] * s
            mask = (self._px - cx) ** 2 + (self._py - cy) ** 2 <= rr * rr
            img[mask] = PROJECTILE
        ay = int(cfg.agent_y * s)
        ax = int(self.agent_x * s)
        img[ay - block // 2:ay + block // 2 + 1,
            max(0, ax - block):ax + block + 1] = AGENT
        return img

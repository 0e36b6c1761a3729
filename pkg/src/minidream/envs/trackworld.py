"""TrackWorld: top-down car on a procedurally generated closed loop of tiles.

Reward is +100/N per newly visited tile and -0.1 per step; the episode ends
when every tile has been visited or after max_steps. The view is a window
centered on the car, so speed is not observable from a single frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from minidream.envs.base import ActionSpec, PixelEnv
from minidream.rng import RngStream

# flat-shaded palette; every value is an exact multiple of 1/255 so frames
# survive the u8 episode-file quantization bit-exactly
GRASS = np.array([31, 106, 31], dtype=np.float64) / 255.0
ROAD = np.array([128, 128, 128], dtype=np.float64) / 255.0
ROAD_VISITED = np.array([90, 90, 90], dtype=np.float64) / 255.0
CAR = np.array([204, 0, 0], dtype=np.float64) / 255.0
NOSE = np.array([255, 204, 0], dtype=np.float64) / 255.0


@dataclass
class TrackWorldConfig:
    size: int = 64                 # square frame, >= 16
    n_tiles: int = 20
    max_steps: int = 1000
    track_radius: float = 12.0
    radius_jitter: float = 0.3     # per-seed radius scale in [1-j, 1+j]
    radial_amp: float = 0.18       # radius modulation -> corners
    road_width: float = 2.0
    visit_radius: float = 1.5      # < half the widest tile gap, see _reset
    view_size: float = 10.0        # world units across the rendered window
    accel_gain: float = 0.15
    brake_gain: float = 0.6
    drag: float = 0.04
    v_max: float = 0.5
    turn_gain: float = 0.55
    grass_slowdown: float = 0.9    # speed multiplier when off the road


class TrackWorld(PixelEnv):
    env_id = "trackworld"

    def __init__(self, config: TrackWorldConfig | None = None):
        super().__init__()
        self.cfg = config or TrackWorldConfig()
        self.action_spec = ActionSpec(3, [(-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)])
        s = self.cfg.size
        self._px = np.arange(s, dtype=np.float64)[None, :]
        self._py = np.arange(s, dtype=np.float64)[:, None]

    def _reset(self, seed: int) -> np.ndarray:
        cfg = self.cfg
        rng = RngStream(seed, "trackworld")
        n = cfg.n_tiles
        theta = 2.0 * np.pi * np.arange(n) / n
        # smooth seeded radius modulation: low-frequency sinusoids
        f1, f2 = rng.integers(2, 4), rng.integers(4, 6)
        p1, p2 = rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
        a1 = cfg.radial_amp * rng.uniform(0.6, 1.0)
        a2 = cfg.radial_amp * rng.uniform(0.3, 0.7)
        # per-seed radius scale: defeats blind constant-turn driving, so the
        # policy must actually perceive the road to follow it
        base = cfg.track_radius * rng.uniform(1.0 - cfg.radius_jitter,
                                              1.0 + cfg.radius_jitter)
        r = base * (1.0 + a1 * np.sin(f1 * theta + p1)
                    + a2 * np.sin(f2 * theta + p2))
        self.tiles = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        self.visited = np.zeros(n, dtype=bool)
        # start in the widest inter-tile gap so the stationary car visits
        # nothing (total tile reward then telescopes to exactly +100)
        gaps = np.linalg.norm(np.roll(self.tiles, -1, axis=0) - self.tiles, axis=1)
        j = int(np.argmax(gaps))
        ahead = self.tiles[(j + 1) % n]
        self.pos = 0.5 * (self.tiles[j] + ahead)
        tangent = ahead - self.pos
        self.heading = float(np.arctan2(tangent[1], tangent[0]))
        self.speed = 0.0
        return self._render()

    def _step(self, action: np.ndarray):
        cfg = self.cfg
        steer, accel, brake = action
        self.speed = max(0.0, (self.speed + cfg.accel_gain * accel)
                         * (1.0 - cfg.drag - cfg.brake_gain * cfg.drag * brake))
        self.speed = min(self.speed, cfg.v_max)
        dists = np.linalg.norm(self.tiles - self.pos, axis=1)
        if dists.min() > cfg.road_width:
            self.speed *= cfg.grass_slowdown
        self.heading += steer * cfg.turn_gain * (self.speed / cfg.v_max)
        self.pos = self.pos + self.speed * np.array(
            [np.cos(self.heading), np.sin(self.heading)])
        newly = (~self.visited) & (np.linalg.norm(self.tiles - self.pos, axis=1)
                                   <= cfg.visit_radius)
        n_new = int(newly.sum())
        self.visited |= newly
        reward = n_new * (100.0 / cfg.n_tiles) - 0.1
        done = bool(self.visited.all()) or (self._step_index + 1 >= cfg.max_steps)
        return self._render(), reward, done

    # -- rendering ----------------------------------------------------------
    def _to_px(self, world_xy: np.ndarray) -> np.ndarray:
        s = self.cfg.size
        return (world_xy - self.pos + self.cfg.view_size / 2.0) \
            * (s / self.cfg.view_size)

    def _render(self) -> np.ndarray:
        cfg = self.cfg
        s = cfg.size
        img = np.empty((s, s, 3), dtype=np.float64)
        img[:] = GRASS
        rr = cfg.road_width * s / cfg.view_size
        margin = cfg.view_size / 2.0 + cfg.road_width
        for i, tile in enumerate(self.tiles):
            if np.abs(tile - self.pos).max() > margin:
                continue
            cx, cy = self._to_px(tile)
            mask = (self._px - cx) ** 2 + (self._py - cy) ** 2 <= rr * rr
            img[mask] = ROAD_VISITED if self.visited[i] else ROAD
        c = s // 2
        half = max(1, s // 32)
        img[c - half:c + half + 1, c - half:c + half + 1] = CAR
        nose = np.round([c + (half + 1) * np.sin(self.heading),
                         c + (half + 1) * np.cos(self.heading)]).astype(int)
        ny, nx = np.clip(nose, 0, s - 1)
        img[ny, nx] = NOSE
        return img

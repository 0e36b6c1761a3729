"""Episode dataset files (magic "WMEP").

Layout, all little-endian:

    "WMEP"  | version u16 | env_id len u16 + utf-8 | H u16 | W u16 | C u16
    action_dim u16 | episode count u32
    per episode:
        seed u64 | n_frames u32
        frames   u8  (n_frames * H * W * C), value = round(pixel * 255)
        actions  f32 ((n_frames - 1) * action_dim)
        rewards  f32 (n_frames - 1)
        dones    u8  (n_frames - 1)

Frames are quantized to u8 deliberately (10x smaller on disk); the vision
model re-normalizes to [0, 1]. Environment palettes are exact multiples of
1/255, so quantization round-trips bit-exactly.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import List

import numpy as np

from minidream.envs.base import EpisodeRecord

MAGIC = b"WMEP"
VERSION = 1


def save_episodes(path, episodes: List[EpisodeRecord]):
    if not episodes:
        raise ValueError("refusing to write an empty episode file")
    for ep in episodes:
        ep.validate()
    first = episodes[0]
    h, w, c = first.frames[0].shape
    action_dim = len(first.actions[0]) if first.actions else 0
    env_id = first.env_id.encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<HH", VERSION, len(env_id)))
            f.write(env_id)
            f.write(struct.pack("<HHHHI", h, w, c, action_dim, len(episodes)))
            for ep in episodes:
                t = len(ep.frames)
                f.write(struct.pack("<QI", ep.seed, t))
                frames = np.stack(ep.frames)
                f.write(np.round(frames * 255.0).astype(np.uint8).tobytes())
                f.write(np.asarray(ep.actions, dtype="<f4").tobytes())
                f.write(np.asarray(ep.rewards, dtype="<f4").tobytes())
                f.write(np.asarray(ep.dones, dtype=np.uint8).tobytes())
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    tmp.replace(path)


def load_episodes(path) -> List[EpisodeRecord]:
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an episode file (bad magic)")
    off = 4
    version, id_len = struct.unpack_from("<HH", data, off)
    off += 4
    if version != VERSION:
        raise ValueError(f"{path}: unsupported episode file version {version}")
    env_id = data[off:off + id_len].decode("utf-8")
    off += id_len
    h, w, c, action_dim, n_eps = struct.unpack_from("<HHHHI", data, off)
    off += 12
    episodes = []
    for _ in range(n_eps):
        seed, t = struct.unpack_from("<QI", data, off)
        off += 12
        n = t * h * w * c
        frames = np.frombuffer(data, dtype=np.uint8, count=n, offset=off) \
            .reshape(t, h, w, c).astype(np.float64) / 255.0
        off += n
        acts = np.frombuffer(data, dtype="<f4", count=(t - 1) * action_dim,
                             offset=off).reshape(t - 1, action_dim).astype(np.float64)
        off += (t - 1) * action_dim * 4
        rews = np.frombuffer(data, dtype="<f4", count=t - 1, offset=off) \
            .astype(np.float64)
        off += (t - 1) * 4
        dones = np.frombuffer(data, dtype=np.uint8, count=t - 1, offset=off) \
            .astype(bool)
        off += t - 1
        episodes.append(EpisodeRecord(
            env_id=env_id, seed=int(seed),
            frames=[frames[i] for i in range(t)],
            actions=[acts[i] for i in range(t - 1)],
            rewards=[float(r) for r in rews],
            dones=[bool(d) for d in dones]))
    return episodes

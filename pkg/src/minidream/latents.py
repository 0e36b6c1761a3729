"""Latent episode datasets (magic "WMLZ").

Per frame we store the posterior (mu, sigma), NOT a fixed z: the dynamics
model resamples z ~ N(mu, sigma) every time it builds a training batch.
Frames themselves are not stored; they are not needed to train the
dynamics model.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from minidream import autodiff as ad
from minidream.envs.base import EpisodeRecord
from minidream.vae import ConvVae

MAGIC = b"WMLZ"
VERSION = 1


@dataclass
class LatentEpisode:
    mu: np.ndarray       # (T, n_z)
    sigma: np.ndarray    # (T, n_z), > 0
    actions: np.ndarray  # (T-1, action_dim)
    dones: np.ndarray    # (T-1,) bool

    def validate(self):
        t = self.mu.shape[0]
        if not (self.sigma.shape[0] == t
                and self.actions.shape[0] == t - 1 == self.dones.shape[0]):
            raise ValueError("inconsistent latent episode lengths")


def encode_episodes(vae: ConvVae, episodes: List[EpisodeRecord],
                    batch: int = 256) -> List[LatentEpisode]:
    out = []
    for ep in episodes:
        frames = np.stack(ep.frames)
        mus, sigmas = [], []
        with ad.no_grad():
            for start in range(0, len(frames), batch):
                mu, logvar = vae.encode_params(frames[start:start + batch])
                mus.append(mu.data)
                sigmas.append(np.exp(logvar.data / 2.0))
        le = LatentEpisode(
            mu=np.concatenate(mus),
            sigma=np.concatenate(sigmas),
            actions=np.asarray(ep.actions, dtype=np.float64).reshape(len(ep.actions), -1),
            dones=np.asarray(ep.dones, dtype=bool))
        le.validate()
        out.append(le)
    return out


def save_latents(path, episodes: List[LatentEpisode]):
    if not episodes:
        raise ValueError("refusing to write an empty latent file")
    for ep in episodes:
        ep.validate()
    n_z = episodes[0].mu.shape[1]
    action_dim = episodes[0].actions.shape[1]
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<HHHI", VERSION, n_z, action_dim, len(episodes)))
            for ep in episodes:
                f.write(struct.pack("<I", ep.mu.shape[0]))
                f.write(ep.mu.astype("<f4").tobytes())
                f.write(ep.sigma.astype("<f4").tobytes())
                f.write(ep.actions.astype("<f4").tobytes())
                f.write(ep.dones.astype(np.uint8).tobytes())
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    tmp.replace(path)


def load_latents(path) -> List[LatentEpisode]:
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a latent dataset (bad magic)")
    version, n_z, action_dim, n_eps = struct.unpack_from("<HHHI", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported latent file version {version}")
    off = 14
    episodes = []
    for _ in range(n_eps):
        (t,) = struct.unpack_from("<I", data, off)
        off += 4
        mu = np.frombuffer(data, dtype="<f4", count=t * n_z, offset=off) \
            .reshape(t, n_z).astype(np.float64)
        off += t * n_z * 4
        sigma = np.frombuffer(data, dtype="<f4", count=t * n_z, offset=off) \
            .reshape(t, n_z).astype(np.float64)
        off += t * n_z * 4
        actions = np.frombuffer(data, dtype="<f4", count=(t - 1) * action_dim,
                                offset=off).reshape(t - 1, action_dim).astype(np.float64)
        off += (t - 1) * action_dim * 4
        dones = np.frombuffer(data, dtype=np.uint8, count=t - 1, offset=off).astype(bool)
        off += t - 1
        episodes.append(LatentEpisode(mu, sigma, actions, dones))
    return episodes

"""Episode and latent dataset file round-trips."""
import numpy as np
import pytest

from minidream.envs import TrackWorld, TrackWorldConfig, load_episodes, save_episodes
from minidream.envs.rollout import collect_random_rollouts
from minidream.latents import LatentEpisode, load_latents, save_latents


def make_episodes(n=3, max_steps=15):
    env = TrackWorld(TrackWorldConfig(size=16, max_steps=max_steps))
    return collect_random_rollouts(env, n, seed=0)


def test_episode_round_trip_is_lossless(tmp_path):
    eps = make_episodes()
    p = tmp_path / "eps.wmep"
    save_episodes(p, eps)
    loaded = load_episodes(p)
    assert len(loaded) == len(eps)
    for a, b in zip(eps, loaded):
        assert a.env_id == b.env_id and a.seed == b.seed
        assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))
        assert all(np.array_equal(x, y) for x, y in zip(a.actions, b.actions))
        assert a.rewards == b.rewards
        assert a.dones == b.dones


def test_episode_second_save_byte_identical(tmp_path):
    eps = make_episodes()
    p1, p2 = tmp_path / "a.wmep", tmp_path / "b.wmep"
    save_episodes(p1, eps)
    save_episodes(p2, load_episodes(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_collect_is_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.wmep", tmp_path / "b.wmep"
    env = TrackWorld(TrackWorldConfig(size=16, max_steps=10))
    collect_random_rollouts(env, 2, seed=3, out_path=p1)
    env2 = TrackWorld(TrackWorldConfig(size=16, max_steps=10))
    collect_random_rollouts(env2, 2, seed=3, out_path=p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "junk.wmep"
    p.write_bytes(b"XXXX" + b"\0" * 32)
    with pytest.raises(ValueError):
        load_episodes(p)


def make_latents(n=3, t=8, n_z=4, action_dim=2):
    g = np.random.default_rng(0)
    out = []
    for _ in range(n):
        out.append(LatentEpisode(
            mu=g.standard_normal((t, n_z)).astype("<f4").astype(np.float64),
            sigma=(np.abs(g.standard_normal((t, n_z))) + 0.1).astype("<f4").astype(np.float64),
            actions=g.standard_normal((t - 1, action_dim)).astype("<f4").astype(np.float64),
            dones=g.uniform(size=t - 1) > 0.8))
    return out


def test_latent_round_trip(tmp_path):
    eps = make_latents()
    p = tmp_path / "l.wmlz"
    save_latents(p, eps)
    loaded = load_latents(p)
    for a, b in zip(eps, loaded):
        assert np.array_equal(a.mu, b.mu)
        assert np.array_equal(a.sigma, b.sigma)
        assert np.array_equal(a.actions, b.actions)
        assert np.array_equal(a.dones, b.dones)


def test_latent_second_save_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.wmlz", tmp_path / "b.wmlz"
    save_latents(p1, make_latents())
    save_latents(p2, load_latents(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_latents_rejected(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        save_latents(tmp_path / "x.wmlz", [])

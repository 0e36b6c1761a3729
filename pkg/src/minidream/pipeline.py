"""Pipeline stages over a run directory.

Artifacts per run directory:
    config.yaml        resolved configuration for the run
    manifest.json      stage ledger (config hash + input/output hashes)
    episodes.wmep      random-policy pixel episodes
    vae.ckpt           vision model
    latents.wmlz       episodes re-encoded as posterior (mu, sigma)
    rnn.ckpt           dynamics model
    controller.ckpt    evolved policy (flat parameter vector)
    *_metrics.csv      per-stage training curves, tagged with the config hash

Each stage checks the manifest: if it already ran under the same config hash
it refuses to recompute unless forced, so re-running the pipeline is cheap
and outputs stay append-only.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from minidream.agent import evaluate_returns, run_random_policy, run_real_rollout
from minidream.checkpoint import load_checkpoint, save_checkpoint
from minidream.cmaes import evolve
from minidream.config import (RunManifest, config_hash, file_hash,
                              save_config, MissingArtifactError)
from minidream.controller import ControllerConfig, feature_dim
from minidream.dream import DreamEnv, run_dream_rollout, transfer_evaluate
from minidream.envs import (DodgeWorld, DodgeWorldConfig, TrackWorld,
                            TrackWorldConfig, collect_random_rollouts,
                            load_episodes)
from minidream.latents import encode_episodes, load_latents, save_latents
from minidream.mdnrnn import MdnRnn, MdnRnnConfig, train_mdnrnn
from minidream.rng import RngStream
from minidream.vae import ConvVae, VaeConfig, train_vae

log = logging.getLogger(__name__)


class StageSkipped(Exception):
    """Raised when a stage already ran under the same config hash."""


def make_env_factory(cfg: Dict) -> Callable[[], object]:
    env_id = cfg["env"]["id"]
    size = cfg["env"]["size"]
    max_steps = cfg["env"]["max_steps"]
    if env_id == "trackworld":
        ecfg = TrackWorldConfig(size=size, max_steps=max_steps)
        return lambda: TrackWorld(ecfg)
    ecfg = DodgeWorldConfig(size=size, max_steps=max_steps)
    return lambda: DodgeWorld(ecfg)


def _paths(run_dir) -> Dict[str, Path]:
    d = Path(run_dir)
    return {
        "config": d / "config.yaml",
        "episodes": d / "episodes.wmep",
        "vae": d / "vae.ckpt",
        "vae_metrics": d / "vae_metrics.csv",
        "latents": d / "latents.wmlz",
        "rnn": d / "rnn.ckpt",
        "rnn_metrics": d / "rnn_metrics.csv",
        "controller": d / "controller.ckpt",
        "evolve_metrics": d / "evolve_metrics.csv",
        "eval_returns": d / "eval_returns.csv",
        "sweep": d / "temperature_sweep.csv",
        "ablation": d / "ablation.csv",
    }


def _guard(run_dir, cfg: Dict, stage: str, force: bool) -> tuple:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(run_dir)
    h = config_hash(cfg)
    if manifest.stage_done(stage, h) and not force:
        raise StageSkipped(
            f"stage {stage!r} already complete for config hash {h}; "
            f"use --force to re-run")
    paths = _paths(run_dir)
    if not paths["config"].exists() or force:
        save_config(paths["config"], cfg)
    return manifest, h, paths


def _require_file(paths: Dict[str, Path], key: str, producer: str, consumer: str):
    if not paths[key].exists():
        raise MissingArtifactError(
            f"stage {consumer!r} needs {paths[key].name} "
            f"(produced by `minidream {producer}`); run that stage first")


# -- stages -------------------------------------------------------------------

def stage_collect(run_dir, cfg: Dict, force: bool = False) -> Path:
    manifest, h, paths = _guard(run_dir, cfg, "collect", force)
    env = make_env_factory(cfg)()
    collect_random_rollouts(env, cfg["collect"]["n_rollouts"], cfg["seed"],
                            action_repeat=cfg["collect"]["action_repeat"],
                            out_path=paths["episodes"])
    manifest.record("collect", h, {}, {"episodes": file_hash(paths["episodes"])})
    return paths["episodes"]


def stage_train_vae(run_dir, cfg: Dict, force: bool = False) -> Path:
    manifest, h, paths = _guard(run_dir, cfg, "train-vae", force)
    _require_file(paths, "episodes", "collect", "train-vae")
    episodes = load_episodes(paths["episodes"])
    frames = np.concatenate([np.stack(ep.frames) for ep in episodes])
    vcfg = VaeConfig(n_z=cfg["vae"]["n_z"], size=cfg["env"]["size"],
                     channels=tuple(cfg["vae"]["channels"]),
                     beta=cfg["vae"]["beta"])
    model = ConvVae(vcfg, RngStream(cfg["seed"], "vae-init"))
    train_vae(model, frames, epochs=cfg["vae"]["epochs"], lr=cfg["vae"]["lr"],
              batch=cfg["vae"]["batch"], seed=cfg["seed"],
              checkpoint_path=paths["vae"], metrics_path=paths["vae_metrics"],
              config_hash=h)
    manifest.record("train-vae", h,
                    {"episodes": file_hash(paths["episodes"])},
                    {"vae": file_hash(paths["vae"]),
                     "vae_metrics": file_hash(paths["vae_metrics"])})
    return paths["vae"]


def stage_train_rnn(run_dir, cfg: Dict, force: bool = False) -> Path:
    manifest, h, paths = _guard(run_dir, cfg, "train-rnn", force)
    _require_file(paths, "episodes", "collect", "train-rnn")
    _require_file(paths, "vae", "train-vae", "train-rnn")
    vae = ConvVae.load(paths["vae"])
    episodes = load_episodes(paths["episodes"])
    latents = encode_episodes(vae, episodes)
    save_latents(paths["latents"], latents)
    action_dim = np.asarray(episodes[0].actions[0]).size
    rcfg = MdnRnnConfig(n_z=cfg["vae"]["n_z"], n_hidden=cfg["rnn"]["n_hidden"],
                        n_mixtures=cfg["rnn"]["n_mixtures"],
                        action_dim=action_dim,
                        predict_done=cfg["rnn"]["predict_done"])
    model = MdnRnn(rcfg, RngStream(cfg["seed"], "mdnrnn-init"))
    train_mdnrnn(model, latents, epochs=cfg["rnn"]["epochs"],
                 lr=cfg["rnn"]["lr"], seed=cfg["seed"],
                 batch_eps=cfg["rnn"]["batch_eps"],
                 checkpoint_path=paths["rnn"], metrics_path=paths["rnn_metrics"],
                 config_hash=h)
    manifest.record("train-rnn", h,
                    {"episodes": file_hash(paths["episodes"]),
                     "vae": file_hash(paths["vae"])},
                    {"latents": file_hash(paths["latents"]),
                     "rnn": file_hash(paths["rnn"]),
                     "rnn_metrics": file_hash(paths["rnn_metrics"])})
    return paths["rnn"]


def _controller_config(cfg: Dict, action_dim: int) -> ControllerConfig:
    mode = cfg["controller"]["mode"]
    fdim = feature_dim(mode, cfg["vae"]["n_z"], cfg["rnn"]["n_hidden"])
    return ControllerConfig(feature_dim=fdim, action_dim=action_dim,
                            hidden=cfg["controller"]["hidden"],
                            use_bias=cfg["controller"]["use_bias"])


def _real_rollout_fn(cfg: Dict, vae: ConvVae, mdnrnn: Optional[MdnRnn],
                     ctrl_cfg: ControllerConfig) -> Callable:
    env_factory = make_env_factory(cfg)
    mode = cfg["controller"]["mode"]

    def rollout(params: np.ndarray, seed: int) -> float:
        return run_real_rollout(env_factory(), vae, mdnrnn, params, ctrl_cfg,
                                mode, seed)
    return rollout


def _dream_rollout_fn(cfg: Dict, mdnrnn: MdnRnn, latents,
                      ctrl_cfg: ControllerConfig, tau: float) -> Callable:
    env_factory = make_env_factory(cfg)
    action_spec = env_factory().action_spec
    mode = cfg["controller"]["mode"]
    dream_steps = cfg["dream"]["max_steps"]

    def rollout(params: np.ndarray, seed: int) -> float:
        dream = DreamEnv(mdnrnn, latents, action_spec, tau=tau,
                         max_steps=dream_steps)
        return run_dream_rollout(dream, params, ctrl_cfg, mode, seed)
    return rollout


def save_controller(path, params: np.ndarray, ctrl_cfg: ControllerConfig,
                    mode: str, fitness: float):
    save_checkpoint(path, {"params": np.asarray(params, dtype=np.float64)},
                    meta={"kind": "controller", "config": ctrl_cfg.to_dict(),
                          "mode": mode, "fitness": float(fitness)})


def load_controller(path):
    tensors, meta = load_checkpoint(path)
    if meta.get("kind") != "controller":
        raise ValueError(f"{path} is not a controller checkpoint")
    return tensors["params"], ControllerConfig.from_dict(meta["config"]), meta["mode"]


def stage_evolve(run_dir, cfg: Dict, force: bool = False,
                 progress: Optional[Callable] = None) -> Path:
    manifest, h, paths = _guard(run_dir, cfg, "evolve", force)
    mode = cfg["controller"]["mode"]
    need_rnn = mode != "z_only" or cfg["evolve"]["in_dream"]
    _require_file(paths, "vae", "train-vae", "evolve")
    if need_rnn:
        _require_file(paths, "rnn", "train-rnn", "evolve")
    vae = ConvVae.load(paths["vae"])
    mdnrnn = MdnRnn.load(paths["rnn"]) if need_rnn else None
    action_dim = make_env_factory(cfg)().action_spec.dimension
    ctrl_cfg = _controller_config(cfg, action_dim)
    if cfg["evolve"]["in_dream"]:
        _require_file(paths, "latents", "train-rnn", "evolve")
        latents = load_latents(paths["latents"])
        rollout = _dream_rollout_fn(cfg, mdnrnn, latents, ctrl_cfg,
                                    cfg["dream"]["tau"])
    else:
        rollout = _real_rollout_fn(cfg, vae, mdnrnn, ctrl_cfg)
    ev = cfg["evolve"]
    best, _ = evolve(rollout, ctrl_cfg.param_count,
                     generations=ev["generations"], lam=ev["lam"],
                     n_rollouts=ev["n_rollouts"], seed=cfg["seed"],
                     sigma0=ev["sigma0"], eval_every=ev["eval_every"],
                     eval_rollouts=ev["eval_rollouts"],
                     metrics_path=paths["evolve_metrics"], config_hash=h,
                     progress=progress)
    save_controller(paths["controller"], best.params, ctrl_cfg, mode,
                    best.fitness)
    inputs = {"vae": file_hash(paths["vae"])}
    if need_rnn:
        inputs["rnn"] = file_hash(paths["rnn"])
    manifest.record("evolve", h, inputs,
                    {"controller": file_hash(paths["controller"]),
                     "evolve_metrics": file_hash(paths["evolve_metrics"])})
    return paths["controller"]


def stage_evaluate(run_dir, cfg: Dict, force: bool = False) -> Dict:
    manifest, h, paths = _guard(run_dir, cfg, "evaluate", force)
    _require_file(paths, "vae", "train-vae", "evaluate")
    _require_file(paths, "controller", "evolve", "evaluate")
    vae = ConvVae.load(paths["vae"])
    params, ctrl_cfg, mode = load_controller(paths["controller"])
    mdnrnn = MdnRnn.load(paths["rnn"]) if mode != "z_only" else None
    result = transfer_evaluate(params, ctrl_cfg, mode, vae, mdnrnn,
                               make_env_factory(cfg),
                               cfg["evaluate"]["n_rollouts"], cfg["seed"],
                               histogram_path=paths["eval_returns"],
                               config_hash=h)
    manifest.record("evaluate", h,
                    {"controller": file_hash(paths["controller"])},
                    {"eval_returns": file_hash(paths["eval_returns"])})
    return result


def evaluate_random_policy(cfg: Dict, n_rollouts: int, seed: int) -> Dict:
    env_factory = make_env_factory(cfg)
    returns = evaluate_returns(lambda s: run_random_policy(env_factory(), s),
                               n_rollouts, seed)
    arr = np.asarray(returns)
    return {"mean": float(arr.mean()), "std": float(arr.std()),
            "returns": [float(r) for r in returns]}


def stage_dream_rollout(run_dir, cfg: Dict, seed: Optional[int] = None,
                        tau: Optional[float] = None) -> float:
    paths = _paths(run_dir)
    _require_file(paths, "rnn", "train-rnn", "dream-rollout")
    _require_file(paths, "latents", "train-rnn", "dream-rollout")
    _require_file(paths, "controller", "evolve", "dream-rollout")
    mdnrnn = MdnRnn.load(paths["rnn"])
    latents = load_latents(paths["latents"])
    params, ctrl_cfg, mode = load_controller(paths["controller"])
    action_spec = make_env_factory(cfg)().action_spec
    dream = DreamEnv(mdnrnn, latents, action_spec,
                     tau=cfg["dream"]["tau"] if tau is None else tau,
                     max_steps=cfg["dream"]["max_steps"])
    return run_dream_rollout(dream, params, ctrl_cfg, mode,
                             cfg["seed"] if seed is None else seed)


def stage_sweep_temperature(run_dir, cfg: Dict, force: bool = False,
                            progress: Optional[Callable] = None) -> List[Dict]:
    """Train one controller in the generated environment per temperature,
    then score each in both environments (Table-2 shape)."""
    manifest, h, paths = _guard(run_dir, cfg, "sweep-temperature", force)
    _require_file(paths, "vae", "train-vae", "sweep-temperature")
    _require_file(paths, "rnn", "train-rnn", "sweep-temperature")
    _require_file(paths, "latents", "train-rnn", "sweep-temperature")
    vae = ConvVae.load(paths["vae"])
    mdnrnn = MdnRnn.load(paths["rnn"])
    latents = load_latents(paths["latents"])
    env_factory = make_env_factory(cfg)
    action_dim = env_factory().action_spec.dimension
    ctrl_cfg = _controller_config(cfg, action_dim)
    mode = cfg["controller"]["mode"]
    ev = cfg["evolve"]
    n_eval = cfg["evaluate"]["n_rollouts"]
    rows = []
    for tau in cfg["sweep"]["tau_grid"]:
        rollout = _dream_rollout_fn(cfg, mdnrnn, latents, ctrl_cfg, tau)
        best, _ = evolve(rollout, ctrl_cfg.param_count,
                         generations=ev["generations"], lam=ev["lam"],
                         n_rollouts=ev["n_rollouts"], seed=cfg["seed"],
                         sigma0=ev["sigma0"], eval_every=0, eval_rollouts=0,
                         progress=progress)
        virtual = evaluate_returns(lambda s: rollout(best.params, s),
                                   n_eval, cfg["seed"] + 1)
        actual = transfer_evaluate(best.params, ctrl_cfg, mode, vae, mdnrnn,
                                   env_factory, n_eval, cfg["seed"] + 2)
        varr = np.asarray(virtual)
        rows.append({"tau": tau,
                     "virtual_mean": float(varr.mean()),
                     "virtual_std": float(varr.std()),
                     "actual_mean": actual["mean"],
                     "actual_std": actual["std"]})
        save_controller(Path(run_dir) / f"controller_tau{tau:.2f}.ckpt",
                        best.params, ctrl_cfg, mode, best.fitness)
    import csv
    with open(paths["sweep"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["config_hash", "tau", "virtual_mean", "virtual_std",
                    "actual_mean", "actual_std"])
        for r in rows:
            w.writerow([h, f"{r['tau']:.2f}", f"{r['virtual_mean']:.6f}",
                        f"{r['virtual_std']:.6f}", f"{r['actual_mean']:.6f}",
                        f"{r['actual_std']:.6f}"])
    manifest.record("sweep-temperature", h,
                    {"rnn": file_hash(paths["rnn"])},
                    {"sweep": file_hash(paths["sweep"])})
    return rows


ABLATION_ROWS = (
    # (label, mode, hidden) in report row order: weakest feature set first
    ("latent_only", "z_only", None),
    ("latent_only_hidden", "z_only", 40),
    ("latent_and_recurrent", "z_h", None),
)


def stage_ablation(run_dir, cfg: Dict, force: bool = False,
                   progress: Optional[Callable] = None) -> List[Dict]:
    """Evolve one controller per feature set and score each in the real
    environment, plus a random-policy baseline (Table-1 shape)."""
    manifest, h, paths = _guard(run_dir, cfg, "ablation", force)
    _require_file(paths, "vae", "train-vae", "ablation")
    _require_file(paths, "rnn", "train-rnn", "ablation")
    vae = ConvVae.load(paths["vae"])
    mdnrnn = MdnRnn.load(paths["rnn"])
    env_factory = make_env_factory(cfg)
    action_dim = env_factory().action_spec.dimension
    ev = cfg["evolve"]
    n_eval = cfg["evaluate"]["n_rollouts"]
    rows = []
    for label, mode, hidden in ABLATION_ROWS:
        sub = dict(cfg, controller=dict(cfg["controller"],
                                        mode=mode, hidden=hidden))
        ctrl_cfg = _controller_config(sub, action_dim)
        m = mdnrnn if mode != "z_only" else None
        rollout = _real_rollout_fn(sub, vae, m, ctrl_cfg)
        best, _ = evolve(rollout, ctrl_cfg.param_count,
                         generations=ev["generations"], lam=ev["lam"],
                         n_rollouts=ev["n_rollouts"], seed=cfg["seed"],
                         sigma0=ev["sigma0"], eval_every=0, eval_rollouts=0,
                         progress=progress)
        result = transfer_evaluate(best.params, ctrl_cfg, mode, vae, m,
                                   env_factory, n_eval, cfg["seed"] + 1)
        rows.append({"label": label, "mean": result["mean"],
                     "std": result["std"]})
        save_controller(Path(run_dir) / f"controller_{label}.ckpt",
                        best.params, ctrl_cfg, mode, best.fitness)
    rand = evaluate_random_policy(cfg, n_eval, cfg["seed"] + 1)
    rows.append({"label": "random_policy", "mean": rand["mean"],
                 "std": rand["std"]})
    import csv
    with open(paths["ablation"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["config_hash", "label", "mean", "std"])
        for r in rows:
            w.writerow([h, r["label"], f"{r['mean']:.6f}", f"{r['std']:.6f}"])
    manifest.record("ablation", h,
                    {"vae": file_hash(paths["vae"]),
                     "rnn": file_hash(paths["rnn"])},
                    {"ablation": file_hash(paths["ablation"])})
    return rows

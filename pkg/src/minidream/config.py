"""Experiment configuration, presets, hashing, and the run manifest.

A run directory holds every artifact one experiment produces; the manifest
records, per stage, the config hash and content hashes of the inputs, so
stage ordering can be enforced and outputs traced.
"""
from __future__ import annotations

import copy
import hashlib
import json
import time
from pathlib import Path
from typing import Dict, Optional

import yaml

TAU_GRID = [0.10, 0.50, 1.00, 1.15, 1.30]

DEFAULTS: Dict = {
    "name": "desk-track",
    "env": {
        "id": "trackworld",
        "size": 24,
        "max_steps": 250,
    },
    "seed": 0,
    "collect": {
        "n_rollouts": 100,
        "action_repeat": 4,
    },
    "vae": {
        "n_z": 8,
        "channels": [8, 16, 32],
        "beta": 1.0,
        "epochs": 5,
        "lr": 1e-3,
        "batch": 64,
    },
    "rnn": {
        "n_hidden": 64,
        "n_mixtures": 5,
        "epochs": 12,
        "lr": 1e-3,
        "batch_eps": 10,
        "predict_done": False,
    },
    "controller": {
        "mode": "z_h",            # z_only | z_h | z_h_c
        "hidden": None,
        "use_bias": True,
    },
    "evolve": {
        "in_dream": False,
        "generations": 80,
        "lam": 16,
        "n_rollouts": 4,
        "sigma0": 0.1,
        "eval_every": 25,
        "eval_rollouts": 64,
    },
    "dream": {
        "tau": 1.0,
        "max_steps": 300,
    },
    "evaluate": {
        "n_rollouts": 100,
    },
    "sweep": {
        "tau_grid": TAU_GRID,
    },
}

# Paper-scale constants, each appearing exactly once:
#   data collection rollouts 10_000; frame size 64; latent dims 32 (car)
#   and 64 (dodge); vae epochs 1; lstm hidden 256 (car) / 512 (dodge);
#   5 mixtures; rnn epochs 20; population 64; 16 rollouts per candidate;
#   re-evaluation every 25 generations over 1024 rollouts; episode caps
#   1000 (car) / 2100 (dodge); dream temperature 1.15; 100 evaluation
#   rollouts; ablation hidden width 40.
PRESETS: Dict[str, Dict] = {
    "desk-track": {},
    "desk-dodge": {
        "name": "desk-dodge",
        "env": {"id": "dodgeworld", "size": 24, "max_steps": 300},
        "collect": {"n_rollouts": 150, "action_repeat": 2},
        "rnn": {"predict_done": True, "epochs": 20},
        "evolve": {"in_dream": True, "generations": 60, "n_rollouts": 8},
    },
    "paper-track": {
        "name": "paper-track",
        "env": {"id": "trackworld", "size": 64, "max_steps": 1000},
        "collect": {"n_rollouts": 10_000, "action_repeat": 4},
        "vae": {"n_z": 32, "channels": [32, 64, 128, 256], "epochs": 1},
        "rnn": {"n_hidden": 256},
        "evolve": {"generations": 1800, "lam": 64, "n_rollouts": 16,
                   "eval_every": 25, "eval_rollouts": 1024},
    },
    "paper-dodge": {
        "name": "paper-dodge",
        "env": {"id": "dodgeworld", "size": 64, "max_steps": 2100},
        "collect": {"n_rollouts": 10_000, "action_repeat": 2},
        "vae": {"n_z": 64, "channels": [32, 64, 128, 256], "epochs": 1},
        "rnn": {"n_hidden": 512, "predict_done": True},
        "controller": {"mode": "z_h_c"},
        "evolve": {"in_dream": True, "generations": 1800, "lam": 64,
                   "n_rollouts": 16, "eval_every": 25, "eval_rollouts": 1024},
        "dream": {"tau": 1.15, "max_steps": 2100},
    },
}


class ConfigError(ValueError):
    pass


def _deep_merge(base: Dict, override: Dict) -> Dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def make_config(preset: str = "desk-track", overrides: Optional[Dict] = None) -> Dict:
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; have {sorted(PRESETS)}")
    cfg = _deep_merge(DEFAULTS, PRESETS[preset])
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: Dict):
    if cfg["env"]["id"] not in ("trackworld", "dodgeworld"):
        raise ConfigError(f"unknown env {cfg['env']['id']!r}")
    if cfg["controller"]["mode"] not in ("z_only", "z_h", "z_h_c"):
        raise ConfigError(f"unknown controller mode {cfg['controller']['mode']!r}")
    if cfg["dream"]["tau"] <= 0:
        raise ConfigError(f"dream tau must be > 0, got {cfg['dream']['tau']}")
    for key in ("collect", "vae", "rnn", "evolve", "evaluate"):
        if key not in cfg:
            raise ConfigError(f"config missing section {key!r}")


def load_config(path) -> Dict:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    preset = raw.pop("preset", "desk-track")
    return make_config(preset, raw)


def save_config(path, cfg: Dict):
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f, sort_keys=True)


def config_hash(cfg: Dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:12]


class RunManifest:
    """Per-run stage ledger stored as manifest.json in the run directory."""

    def __init__(self, run_dir):
        self.run_dir = Path(run_dir)
        self.path = self.run_dir / "manifest.json"
        self.data = {"stages": {}}
        if self.path.exists():
            with open(self.path) as f:
                self.data = json.load(f)

    def stage_done(self, stage: str, cfg_hash: str) -> bool:
        rec = self.data["stages"].get(stage)
        return rec is not None and rec["config_hash"] == cfg_hash

    def record(self, stage: str, cfg_hash: str, inputs: Dict[str, str],
               outputs: Dict[str, str]):
        self.data["stages"][stage] = {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "config_hash": cfg_hash,
            "inputs": inputs,
            "outputs": outputs,
        }
        with open(self.path, "w") as f:
            json.dump(self.data, f, indent=2, sort_keys=True)

    def require(self, stage: str, needed_by: str):
        if stage not in self.data["stages"]:
            raise MissingArtifactError(
                f"stage {needed_by!r} needs the output of {stage!r}; "
                f"run `minidream {stage}` first")


class MissingArtifactError(RuntimeError):
    pass

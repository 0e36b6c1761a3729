"""Configuration handling and the command-line pipeline."""
import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from minidream import pipeline
from minidream.cli import main
from minidream.config import (ConfigError, RunManifest, config_hash,
                              load_config, make_config, save_config)

MICRO = {
    "env": {"max_steps": 40},
    "collect": {"n_rollouts": 4},
    "vae": {"epochs": 1, "batch": 16, "n_z": 4, "channels": [4, 8, 16]},
    "rnn": {"epochs": 1, "n_hidden": 8, "batch_eps": 2},
    "evolve": {"generations": 1, "lam": 4, "n_rollouts": 1,
               "eval_every": 0, "eval_rollouts": 0},
    "evaluate": {"n_rollouts": 2},
}


class TestConfig:
    def test_presets_resolve_and_validate(self):
        for preset in ("desk-track", "desk-dodge", "paper-track", "paper-dodge"):
            cfg = make_config(preset)
            assert cfg["env"]["id"] in ("trackworld", "dodgeworld")

    def test_hash_is_stable_and_sensitive(self):
        a = make_config("desk-track")
        b = make_config("desk-track")
        assert config_hash(a) == config_hash(b)
        b["seed"] = 123
        assert config_hash(a) != config_hash(b)

    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError, match="preset"):
            make_config("nope")

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError, match="tau"):
            make_config("desk-track", {"dream": {"tau": 0.0}})
        with pytest.raises(ConfigError, match="mode"):
            make_config("desk-track", {"controller": {"mode": "bogus"}})

    def test_yaml_round_trip(self, tmp_path):
        cfg = make_config("desk-dodge", {"seed": 42})
        p = tmp_path / "c.yaml"
        save_config(p, cfg)
        raw = yaml.safe_load(p.read_text())
        raw["preset"] = "desk-dodge"
        (tmp_path / "c2.yaml").write_text(yaml.safe_dump(raw))
        loaded = load_config(tmp_path / "c2.yaml")
        assert config_hash(loaded) == config_hash(cfg)


class TestPipelineStages:
    def test_missing_artifact_names_producer(self, tmp_path):
        cfg = make_config("desk-track", MICRO)
        with pytest.raises(Exception, match="collect"):
            pipeline.stage_train_vae(tmp_path / "r", cfg)

    def test_stage_skip_guard(self, tmp_path):
        cfg = make_config("desk-track", MICRO)
        pipeline.stage_collect(tmp_path / "r", cfg)
        with pytest.raises(pipeline.StageSkipped, match="--force"):
            pipeline.stage_collect(tmp_path / "r", cfg)
        # force re-runs; changed config also re-runs
        pipeline.stage_collect(tmp_path / "r", cfg, force=True)
        cfg2 = make_config("desk-track", dict(MICRO, seed=5))
        pipeline.stage_collect(tmp_path / "r", cfg2)

    def test_manifest_records_stages(self, tmp_path):
        cfg = make_config("desk-track", MICRO)
        pipeline.stage_collect(tmp_path / "r", cfg)
        man = RunManifest(tmp_path / "r")
        assert man.stage_done("collect", config_hash(cfg))
        rec = man.data["stages"]["collect"]
        assert "episodes" in rec["outputs"]


def _cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


class TestCli:
    @pytest.fixture
    def cfg_file(self, tmp_path):
        p = tmp_path / "micro.yaml"
        p.write_text(yaml.safe_dump(dict(MICRO, preset="desk-dodge",
                                         dream={"max_steps": 20})))
        return str(p)

    def test_full_pipeline_via_cli(self, tmp_path, cfg_file):
        rd = str(tmp_path / "run")
        for cmd in ("collect", "train-vae", "train-rnn", "evolve"):
            res = _cli([cmd, "--run-dir", rd, "--config", cfg_file])
            assert res.exit_code == 0, f"{cmd}: {res.output}"
        res = _cli(["evaluate", "--run-dir", rd, "--config", cfg_file])
        assert res.exit_code == 0 and "mean=" in res.output
        res = _cli(["dream-rollout", "--run-dir", rd, "--config", cfg_file,
                    "--tau", "1.0"])
        assert res.exit_code == 0 and "dream return" in res.output

    def test_missing_artifact_exit_code(self, tmp_path, cfg_file):
        res = _cli(["train-vae", "--run-dir", str(tmp_path / "empty"),
                    "--config", cfg_file])
        assert res.exit_code == 3
        assert "collect" in res.output

    def test_rerun_refused_without_force(self, tmp_path, cfg_file):
        rd = str(tmp_path / "run")
        assert _cli(["collect", "--run-dir", rd, "--config", cfg_file]).exit_code == 0
        res = _cli(["collect", "--run-dir", rd, "--config", cfg_file])
        assert "--force" in res.output and "already complete" in res.output
        res = _cli(["collect", "--run-dir", rd, "--config", cfg_file, "--force"])
        assert res.exit_code == 0 and "wrote" in res.output

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"dream": {"tau": -1}}))
        res = _cli(["collect", "--run-dir", str(tmp_path / "r"),
                    "--config", str(bad)])
        assert res.exit_code == 2 and "config error" in res.output

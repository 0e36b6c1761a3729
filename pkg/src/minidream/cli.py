"""Command-line pipeline driver.

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact,
4 numerical abort during training.
"""
from __future__ import annotations

import logging
import sys

import click

from minidream import pipeline
from minidream.config import (ConfigError, MissingArtifactError, PRESETS,
                              config_hash, load_config, make_config)

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4


def _load(preset, config_file, seed):
    try:
        cfg = load_config(config_file) if config_file else make_config(preset)
        if seed is not None:
            cfg["seed"] = seed
        return cfg
    except (ConfigError, FileNotFoundError, ValueError) as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)


def _run(stage_fn, *args, **kwargs):
    try:
        return stage_fn(*args, **kwargs)
    except pipeline.StageSkipped as e:
        click.echo(str(e))
        sys.exit(0)
    except MissingArtifactError as e:
        click.echo(f"missing artifact: {e}", err=True)
        sys.exit(EXIT_MISSING)
    except FloatingPointError as e:
        click.echo(f"numerical abort: {e}", err=True)
        sys.exit(EXIT_NUMERIC)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)


def _common(f):
    f = click.option("--run-dir", required=True,
                     type=click.Path(file_okay=False),
                     help="directory holding all artifacts for this run")(f)
    f = click.option("--preset", default="desk-track",
                     type=click.Choice(sorted(PRESETS)),
                     help="named configuration preset")(f)
    f = click.option("--config", "config_file", default=None,
                     type=click.Path(exists=False, dir_okay=False),
                     help="YAML config file (overrides the preset)")(f)
    f = click.option("--seed", type=int, default=None,
                     help="override the config seed")(f)
    f = click.option("--force", is_flag=True,
                     help="re-run even if this stage already completed "
                          "under the same config hash")(f)
    return f


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command(help="Collect random-policy pixel episodes.")
@_common
def collect(run_dir, preset, config_file, seed, force):
    cfg = _load(preset, config_file, seed)
    path = _run(pipeline.stage_collect, run_dir, cfg, force)
    click.echo(f"wrote {path} (config hash {config_hash(cfg)})")


@main.command("train-vae", help="Train the vision model on collected frames.")
@_common
def train_vae(run_dir, preset, config_file, seed, force):
    cfg = _load(preset, config_file, seed)
    path = _run(pipeline.stage_train_vae, run_dir, cfg, force)
    click.echo(f"wrote {path} (config hash {config_hash(cfg)})")


@main.command("train-rnn", help="Encode episodes to latents and train the "
                                "dynamics model.")
@_common
def train_rnn(run_dir, preset, config_file, seed, force):
    cfg = _load(preset, config_file, seed)
    path = _run(pipeline.stage_train_rnn, run_dir, cfg, force)
    click.echo(f"wrote {path} (config hash {config_hash(cfg)})")


def _progress(row):
    e = row["eval_score"]
    extra = "" if e == "" else f"  eval={e:.2f}"
    click.echo(f"gen {row['generation']:4d}  best={row['best']:8.2f}  "
               f"mean={row['mean']:8.2f}  sigma_es={row['sigma_es']:.4f}{extra}")


@main.command(help="Evolve the controller with CMA-ES.")
@_common
def evolve(run_dir, preset, config_file, seed, force):
    cfg = _load(preset, config_file, seed)
    path = _run(pipeline.stage_evolve, run_dir, cfg, force, progress=_progress)
    click.echo(f"wrote {path} (config hash {config_hash(cfg)})")


@main.command(help="Score the evolved controller in the real environment.")
@_common
@click.option("--random-baseline", is_flag=True,
              help="also score a uniform-random policy")
def evaluate(run_dir, preset, config_file, seed, force, random_baseline):
    cfg = _load(preset, config_file, seed)
    result = _run(pipeline.stage_evaluate, run_dir, cfg, force)
    click.echo(f"controller: mean={result['mean']:.2f} std={result['std']:.2f} "
               f"over {cfg['evaluate']['n_rollouts']} rollouts")
    if random_baseline:
        rand = pipeline.evaluate_random_policy(
            cfg, cfg["evaluate"]["n_rollouts"], cfg["seed"])
        click.echo(f"random:     mean={rand['mean']:.2f} std={rand['std']:.2f}")


@main.command("dream-rollout", help="Run one controller rollout inside the "
                                    "generated environment.")
@_common
@click.option("--tau", type=float, default=None, help="sampling temperature")
def dream_rollout(run_dir, preset, config_file, seed, force, tau):
    cfg = _load(preset, config_file, seed)
    ret = _run(pipeline.stage_dream_rollout, run_dir, cfg,
               seed=cfg["seed"], tau=tau)
    click.echo(f"dream return: {ret:.2f}")


@main.command("sweep-temperature",
              help="Train in the generated environment across a temperature "
                   "grid and score each controller in both environments.")
@_common
def sweep_temperature(run_dir, preset, config_file, seed, force):
    cfg = _load(preset, config_file, seed)
    rows = _run(pipeline.stage_sweep_temperature, run_dir, cfg, force)
    click.echo(f"{'tau':>6} {'virtual':>12} {'actual':>12}")
    for r in rows:
        click.echo(f"{r['tau']:6.2f} "
                   f"{r['virtual_mean']:7.1f}±{r['virtual_std']:<5.1f} "
                   f"{r['actual_mean']:7.1f}±{r['actual_std']:<5.1f}")


@main.command(help="Evolve and score one controller per feature set "
                   "(latent only / latent+hidden layer / latent+recurrent).")
@_common
def ablation(run_dir, preset, config_file, seed, force):
    cfg = _load(preset, config_file, seed)
    rows = _run(pipeline.stage_ablation, run_dir, cfg, force)
    for r in rows:
        click.echo(f"{r['label']:>22}: {r['mean']:8.2f} ± {r['std']:.2f}")


if __name__ == "__main__":
    main()

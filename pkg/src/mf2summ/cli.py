"""Operator surface.

Subcommands: gen-fixtures, train, summarize, eval, inspect. A YAML config
file is the source of truth; command-line flags override it, and the merged
effective config is echoed into every output for reproducibility.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import click
import numpy as np
import yaml

from .errors import ConfigError, DataError, Mf2Error, NumericalError
from .evaluation import evaluate, score_curve_dump
from .features import gen_synthetic_fixture, load_manifest, read_features
from .model import (
    CHECKPOINT_MAGIC,
    ModelConfig,
    config_with_ablations,
    forward,
    load_checkpoint,
)
from .postprocess import PostprocessConfig, summarize
from .training import TrainConfig, train

SECTIONS = {"model": ModelConfig, "train": TrainConfig, "postprocess": PostprocessConfig}


def _out_root() -> Path:
    return Path(os.environ.get("MF2SUMM_OUT", "."))


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}")
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping of sections")
    known = set(SECTIONS) | {"eval"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config sections: {sorted(unknown)}")
    for section, cls in SECTIONS.items():
        if section in doc:
            if not isinstance(doc[section], dict):
                raise ConfigError(f"{path}: section '{section}' must be a mapping")
            valid = {f.name for f in fields(cls)}
            bad = set(doc[section]) - valid
            if bad:
                raise ConfigError(f"{path}: unknown keys in '{section}': {sorted(bad)}")
    return doc


def _build(cls, section: dict, overrides: dict):
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**merged)
    except TypeError as e:
        raise ConfigError(str(e))


def _echo_config(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, default=str)


@click.group()
def cli():
    """Audio-visual video summarization toolkit."""


@cli.command("gen-fixtures")
@click.option("--videos", type=int, default=3, show_default=True)
@click.option("--frames", type=int, default=48, show_default=True)
@click.option("--dv", type=int, default=32, show_default=True)
@click.option("--da", type=int, default=16, show_default=True)
@click.option("--users", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Output directory (default: $MF2SUMM_OUT/fixtures)")
def cmd_gen_fixtures(videos, frames, dv, da, users, seed, out):
    """Generate a deterministic synthetic dataset with planted events."""
    if min(videos, frames, dv, da, users) < 1:
        raise ConfigError("all fixture counts must be >= 1")
    out_dir = Path(out) if out else _out_root() / "fixtures"
    manifest = gen_synthetic_fixture(videos, frames, dv, da, seed, out_dir, n_users=users)
    click.echo(str(manifest))


def _resolve_configs(config, seed, model_overrides, train_overrides):
    doc = _load_config_file(config)
    if seed is not None:
        train_overrides = dict(train_overrides, seed=seed)
    model_config = _build(ModelConfig, doc.get("model", {}), model_overrides)
    train_config = _build(TrainConfig, doc.get("train", {}), train_overrides)
    post_config = _build(PostprocessConfig, doc.get("postprocess", {}), {})
    return model_config, train_config, post_config


def _infer_dims(dataset):
    return {"d_v": dataset.videos[0].visual.dim, "d_a": dataset.videos[0].audio.dim}


@cli.command("train")
@click.option("--manifest", "manifest_path", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--no-audio", is_flag=True, help="Ablation: drop the audio pathway")
@click.option("--no-align-mask", is_flag=True, help="Ablation: fusion uses global attention")
@click.option("--no-centerness", is_flag=True, help="Ablation: drop the center-ness branch (mu=0, v=1)")
@click.option("--resume", "resume_path", type=click.Path(), default=None, help="Resume from checkpoint")
@click.option("--out", type=click.Path(), default=None, help="Output directory (default: $MF2SUMM_OUT/run)")
def cmd_train(manifest_path, config, seed, epochs, lr, no_audio, no_align_mask, no_centerness, resume_path, out):
    """Train on a dataset manifest; writes checkpoint and training log."""
    dataset = load_manifest(manifest_path)
    model_overrides = _infer_dims(dataset)
    train_overrides = {"epochs": epochs, "lr": lr}
    model_config, train_config, _ = _resolve_configs(config, seed, model_overrides, train_overrides)
    if train_config.grad_clip is None:
        train_config = replace(train_config, grad_clip=10.0)  # CLI default, documented
    model_config = config_with_ablations(
        model_config, no_audio=no_audio, no_align_mask=no_align_mask, no_centerness=no_centerness
    )
    if no_centerness:
        train_config = replace(train_config, mu=0.0)

    out_dir = Path(out) if out else _out_root() / "run"
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "model.ckpt"
    log_path = out_dir / "train.log"

    resume = None
    if resume_path:
        params0, state0, ckpt_cfg, meta = load_checkpoint(resume_path)
        if ckpt_cfg != model_config:
            raise ConfigError(f"{resume_path}: checkpoint config does not match requested config")
        if state0 is None:
            raise ConfigError(f"{resume_path}: checkpoint has no optimizer state, cannot resume")
        resume = (params0, state0, int(meta.get("epoch", 0)))

    with open(log_path, "w") as logf:
        effective = {
            "model": asdict(model_config),
            "train": asdict(train_config),
            "ablations": {"no_audio": no_audio, "no_align_mask": no_align_mask, "no_centerness": no_centerness},
        }
        logf.write(_echo_config(effective) + "\n")
        params, report = train(
            dataset, model_config, train_config,
            checkpoint_path=ckpt, resume_from=resume,
            log=lambda line: logf.write(line + "\n"),
        )
    click.echo(f"checkpoint: {ckpt}")
    click.echo(f"log: {log_path}")
    if report.loss_curve:
        click.echo(f"final loss: {report.loss_curve[-1]['total']:.6f}")


def _load_for_inference(checkpoint, manifest_path):
    params, _, model_config, meta = load_checkpoint(checkpoint)
    dataset = load_manifest(manifest_path)
    dims = _infer_dims(dataset)
    if dims["d_v"] != model_config.d_v or (model_config.use_audio and dims["d_a"] != model_config.d_a):
        raise DataError(
            f"feature dims {dims} do not match checkpoint config "
            f"(d_v={model_config.d_v}, d_a={model_config.d_a})"
        )
    return params, model_config, dataset, meta


@cli.command("summarize")
@click.option("--manifest", "manifest_path", type=click.Path(), required=True)
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
def cmd_summarize(manifest_path, checkpoint, config, out):
    """Emit summary records and plot-ready score dumps for every video."""
    doc = _load_config_file(config)
    post_config = _build(PostprocessConfig, doc.get("postprocess", {}), {})
    params, model_config, dataset, _ = _load_for_inference(checkpoint, manifest_path)
    out_dir = Path(out) if out else _out_root() / "summaries"
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "summaries.jsonl"
    with open(records_path, "w") as f:
        f.write(_echo_config({"postprocess": asdict(post_config), "checkpoint": checkpoint}) + "\n")
        for video in dataset.videos:
            fwd = forward(video.visual, video.audio, params, model_config, train=False)
            summary = summarize(fwd.predictions(), video.visual, post_config)
            f.write(summary.to_json(video.video_id) + "\n")
            dump = score_curve_dump(video, params, model_config, post_config)
            (out_dir / f"{video.video_id}.scores.jsonl").write_text(dump)
            budget_pct = 100.0 * summary.n_selected_frames / video.n_frames
            click.echo(
                f"{video.video_id}: {summary.n_selected_frames}/{video.n_frames} frames "
                f"({budget_pct:.1f}% <= 15%)"
            )
    click.echo(f"records: {records_path}")


@cli.command("eval")
@click.option("--manifest", "manifest_path", type=click.Path(), required=True)
@click.option("--checkpoint", type=click.Path(), required=True)
@click.option("--config", type=click.Path(), default=None)
@click.option("--protocol", type=click.Choice(["max", "mean"]), default="max", show_default=True)
@click.option("--fold", type=int, default=None, help="Evaluate only videos with this fold id")
@click.option("--out", type=click.Path(), default=None)
def cmd_eval(manifest_path, checkpoint, config, protocol, fold, out):
    """F-score evaluation against user summaries."""
    doc = _load_config_file(config)
    post_config = _build(PostprocessConfig, doc.get("postprocess", {}), {})
    params, model_config, dataset, _ = _load_for_inference(checkpoint, manifest_path)
    if fold is not None:
        _, dataset = dataset.split(fold)
    result = evaluate(dataset, params, model_config, protocol=protocol, post_config=post_config, split_id=fold)
    out_dir = Path(out) if out else _out_root() / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "eval.jsonl"
    with open(report_path, "w") as f:
        f.write(_echo_config({"postprocess": asdict(post_config), "protocol": protocol}) + "\n")
        f.write(result.to_jsonl())
    click.echo(f"dataset F ({protocol} over users): {result.dataset_f:.4f}")
    click.echo(f"report: {report_path}")


@cli.command("inspect")
@click.argument("path", type=click.Path())
def cmd_inspect(path):
    """Print header/shape info for a feature or checkpoint file."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == CHECKPOINT_MAGIC:
        params, state, cfg, meta = load_checkpoint(path)
        click.echo(f"checkpoint: {path}")
        click.echo(f"config: {_echo_config(asdict(cfg))}")
        click.echo(f"parameters: {len(params)} tensors, {params.n_scalars()} scalars")
        click.echo(f"adam state: {'present (t=%d)' % state.t if state else 'absent'}")
        click.echo(f"meta: {_echo_config(meta)}")
    else:
        seq = read_features(path)
        click.echo(f"feature file: {path}")
        click.echo(f"modality: {seq.modality}")
        click.echo(f"T: {seq.T}")
        click.echo(f"d: {seq.dim}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(1)
    except NumericalError as e:
        click.echo(f"numerical failure: {e}", err=True)
        sys.exit(3)
    except (DataError, Mf2Error) as e:
        click.echo(f"data error: {e}", err=True)
        sys.exit(2)
    except OSError as e:
        click.echo(f"data error: {e}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()

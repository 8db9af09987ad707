"""End-to-end training: per-video target construction, forward pass, taped
multi-task loss, Adam update, checkpointing.

Updates happen per video (batch size 1) in a fixed order, so the whole loop
is deterministic given (seed, dataset, configs). Targets are epoch-invariant
and precomputed once before epoch 1.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as tk
from .errors import ContractError, NumericalError
from .features import Dataset, VideoRecord
from .labels import FrameTargets, LossWeights, build_frame_targets, loss_terms, to_shot_level_annotation, total_loss
from .model import ModelConfig, ModelParams, forward, init_params, save_checkpoint
from .tensor import AdamState, GradTape, adam_step, backward, clip_gradients, grad_of


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 1.0
    mu: float = 1.0
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    seed: int = 0
    budget_frac: float = 0.15
    grad_clip: float | None = None  # global norm; the CLI defaults this to 10
    checkpoint_every: int = 0  # epochs; 0 = only final
    patience: int | None = None  # early stop on non-improving total loss

    def __post_init__(self):
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.lr <= 0:
            raise ContractError("learning rate must be > 0")

    def loss_weights(self) -> LossWeights:
        return LossWeights(
            lam=self.lam, mu=self.mu, focal_alpha=self.focal_alpha, focal_gamma=self.focal_gamma
        )


@dataclass
class TrainReport:
    loss_curve: list[dict] = field(default_factory=list)  # per-epoch term means
    wall_clock: float = 0.0
    checkpoint_path: str | None = None
    meta: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"epoch": i, **row}, sort_keys=True) for i, row in enumerate(self.loss_curve)]
        return "\n".join(lines) + ("\n" if lines else "")


def precompute_targets(dataset: Dataset, budget_frac: float) -> dict[str, FrameTargets]:
    targets = {}
    for video in dataset.videos:
        annotation = to_shot_level_annotation(video.user_scores, video.visual, budget_frac)
        targets[video.video_id] = build_frame_targets(annotation)
    return targets


def _dropout_rng(seed: int, epoch: int, video_idx: int) -> np.random.Generator:
    # keyed per step so resumed runs replay the same masks
    return np.random.default_rng([seed, 7919, epoch, video_idx])


def train_step(
    video: VideoRecord,
    targets: FrameTargets,
    params: ModelParams,
    state: AdamState,
    model_config: ModelConfig,
    weights: LossWeights,
    rng: np.random.Generator,
    grad_clip: float | None,
) -> tuple[ModelParams, dict[str, float]]:
    with GradTape() as tape:
        out = forward(video.visual, video.audio, params, model_config, train=True, rng=rng)
        loss = total_loss(out, targets, weights)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            raise NumericalError("loss is not finite")
        grads_by_id = backward(tape, loss)
    grads = {name: grad_of(grads_by_id, p) for name, p in params.items()}
    if grad_clip is not None:
        grads = clip_gradients(grads, grad_clip)
    new_params = adam_step(params, grads, state)
    terms = loss_terms(out, targets, weights)
    terms["total_taped"] = loss_value
    return ModelParams(new_params), terms


def train(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    checkpoint_path=None,
    resume_from: tuple[ModelParams, AdamState, int] | None = None,
    log=None,
) -> tuple[ModelParams, TrainReport]:
    """Algorithm: per epoch, per video: build targets, forward, multi-task
    loss, backward, Adam update. Raises NumericalError naming the epoch and
    video if the loss diverges."""
    if len(dataset) == 0:
        raise ContractError("cannot train on an empty dataset")
    weights = train_config.loss_weights()
    targets = precompute_targets(dataset, train_config.budget_frac)
    if resume_from is not None:
        params, state, start_epoch = resume_from
        params = ModelParams(params)
    else:
        params = init_params(model_config, train_config.seed)
        state = AdamState(
            lr=train_config.lr,
            beta1=train_config.beta1,
            beta2=train_config.beta2,
            eps=train_config.adam_eps,
        )
        start_epoch = 0
    report = TrainReport(meta={"model_config": asdict(model_config), "train_config": asdict(train_config)})
    t0 = time.monotonic()
    best = np.inf
    stale = 0
    for epoch in range(start_epoch, train_config.epochs):
        epoch_terms: list[dict[str, float]] = []
        for vi, video in enumerate(dataset.videos):
            rng = _dropout_rng(train_config.seed, epoch, vi)
            try:
                params, terms = train_step(
                    video, targets[video.video_id], params, state, model_config,
                    weights, rng, train_config.grad_clip,
                )
            except NumericalError as e:
                raise NumericalError(
                    f"training diverged at epoch {epoch}, video {video.video_id}: {e}"
                ) from e
            epoch_terms.append(terms)
        means = {k: float(np.mean([t[k] for t in epoch_terms])) for k in epoch_terms[0]}
        report.loss_curve.append(means)
        if log is not None:
            log(json.dumps({"epoch": epoch, **means}, sort_keys=True))
        if checkpoint_path and train_config.checkpoint_every and (epoch + 1) % train_config.checkpoint_every == 0:
            save_checkpoint(params, state, checkpoint_path, model_config, meta={"epoch": epoch + 1})
        if train_config.patience is not None:
            if means["total"] < best - 1e-9:
                best = means["total"]
                stale = 0
            else:
                stale += 1
                if stale > train_config.patience:
                    break
    report.wall_clock = time.monotonic() - t0
    if checkpoint_path:
        save_checkpoint(
            params, state, checkpoint_path, model_config,
            meta={"epoch": start_epoch + len(report.loss_curve)},
        )
        report.checkpoint_path = str(checkpoint_path)
    return params, report

"""F-score evaluation against per-user summaries under the 15% budget,
cross-validation splits, and machine-readable reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .features import Dataset, FeatureSequence, VideoRecord
from .labels import to_shot_level_annotation
from .model import ModelConfig, ModelParams, forward
from .postprocess import PostprocessConfig, Summary, summarize


@dataclass
class VideoEval:
    video_id: str
    per_user: list[tuple[float, float, float]]  # (P, R, F) per user
    f_max: float
    f_mean: float
    summary: Summary


@dataclass
class EvalResult:
    videos: list[VideoEval] = field(default_factory=list)
    protocol: str = "max"
    split_id: int | None = None

    @property
    def dataset_f(self) -> float:
        if not self.videos:
            return 0.0
        key = "f_max" if self.protocol == "max" else "f_mean"
        return float(np.mean([getattr(v, key) for v in self.videos]))

    def to_jsonl(self) -> str:
        lines = []
        for v in self.videos:
            lines.append(
                json.dumps(
                    {
                        "video_id": v.video_id,
                        "per_user": [[round(x, 6) for x in u] for u in v.per_user],
                        "f_max": round(v.f_max, 6),
                        "f_mean": round(v.f_mean, 6),
                    },
                    sort_keys=True,
                )
            )
        lines.append(
            json.dumps(
                {
                    "dataset_f": round(self.dataset_f, 6),
                    "protocol": self.protocol,
                    "n_videos": len(self.videos),
                    "split_id": self.split_id,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def fscore(pred_mask: np.ndarray, user_mask: np.ndarray) -> tuple[float, float, float]:
    """Frame-level precision, recall, F; zero-division cases return 0."""
    pred_mask = np.asarray(pred_mask, dtype=bool)
    user_mask = np.asarray(user_mask, dtype=bool)
    if pred_mask.shape != user_mask.shape:
        raise ContractError(f"mask length mismatch: {pred_mask.shape} vs {user_mask.shape}")
    overlap = float(np.sum(pred_mask & user_mask))
    n_pred = float(pred_mask.sum())
    n_user = float(user_mask.sum())
    p = overlap / n_pred if n_pred else 0.0
    r = overlap / n_user if n_user else 0.0
    f = 2 * p * r / (p + r) if (p + r) else 0.0
    return p, r, f


def user_mask_from_scores(
    user_scores: np.ndarray,
    features: FeatureSequence,
    budget_frac: float = 0.15,
    kts_max_segments: int | None = None,
    kts_penalty: float = 0.0,
) -> np.ndarray:
    """Ground-truth keyshot mask for one user via the same KTS + knapsack
    pipeline used for training targets."""
    annotation = to_shot_level_annotation(
        np.atleast_2d(user_scores), features, budget_frac,
        kts_max_segments=kts_max_segments, kts_penalty=kts_penalty,
    )
    return annotation.frame_mask()


def evaluate_video(
    video: VideoRecord,
    params: ModelParams,
    model_config: ModelConfig,
    post_config: PostprocessConfig = PostprocessConfig(),
) -> VideoEval:
    out = forward(video.visual, video.audio, params, model_config, train=False)
    summary = summarize(out.predictions(), video.visual, post_config)
    per_user = []
    for row in video.user_scores:
        user_mask = user_mask_from_scores(
            row, video.visual, post_config.budget_frac,
            kts_max_segments=post_config.kts_max_segments,
            kts_penalty=post_config.kts_penalty,
        )
        per_user.append(fscore(summary.mask, user_mask))
    fs = [f for _, _, f in per_user]
    return VideoEval(
        video_id=video.video_id,
        per_user=per_user,
        f_max=max(fs) if fs else 0.0,
        f_mean=float(np.mean(fs)) if fs else 0.0,
        summary=summary,
    )


def evaluate(
    dataset: Dataset,
    params: ModelParams,
    model_config: ModelConfig,
    protocol: str = "max",
    post_config: PostprocessConfig = PostprocessConfig(),
    split_id: int | None = None,
) -> EvalResult:
    if protocol not in ("max", "mean"):
        raise ContractError(f"protocol must be 'max' or 'mean', got {protocol!r}")
    if len(dataset) == 0:
        raise DataError("empty test split")
    result = EvalResult(protocol=protocol, split_id=split_id)
    for video in dataset.videos:
        result.videos.append(evaluate_video(video, params, model_config, post_config))
    return result


def make_folds(n_videos: int, n_folds: int = 5, seed: int = 0) -> list[int]:
    """Seeded random assignment of videos to cross-validation folds."""
    if n_folds < 1:
        raise ContractError("n_folds must be >= 1")
    rng = np.random.default_rng(seed)
    folds = np.arange(n_videos) % n_folds
    rng.shuffle(folds)
    return folds.tolist()


def score_curve_dump(video: VideoRecord, params: ModelParams, model_config: ModelConfig,
                     post_config: PostprocessConfig = PostprocessConfig()) -> str:
    """Plot-ready per-frame dump: frame, s, v, co, mask (JSON lines)."""
    out = forward(video.visual, video.audio, params, model_config, train=False)
    pred = out.predictions()
    summary = summarize(pred, video.visual, post_config)
    lines = []
    for j in range(video.n_frames):
        lines.append(
            json.dumps(
                {
                    "frame": j,
                    "s": round(float(pred.s[j]), 6),
                    "v": round(float(pred.v[j]), 6),
                    "co": round(float(pred.s[j] * pred.v[j]), 6),
                    "mask": bool(summary.mask[j]),
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n"

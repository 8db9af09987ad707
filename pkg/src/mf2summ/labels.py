"""Training targets from user annotations and the multi-task loss.

Targets: user scores are averaged per frame, the video is segmented with
KTS, shots are scored by their mean and keyshots picked by 0/1 knapsack
under the summary budget. Positive frames then get boundary offsets to
their keyshot's edges and a center-ness value.

Loss: focal classification over all frames, tIoU boundary regression and
BCE center-ness over positive frames only, combined as
cls + lambda * reg + mu * center.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as tk
from .errors import ContractError
from .features import FeatureSequence
from .model import ForwardOutput
from .tensor import Tensor2

CLAMP = 1e-7  # probabilities are clamped to [CLAMP, 1-CLAMP] before log


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0  # boundary regression weight
    mu: float = 1.0  # center-ness weight
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0 or self.focal_gamma < 0:
            raise ContractError("loss weights and focal gamma must be >= 0")
        if not (0.0 < self.focal_alpha <= 1.0):
            raise ContractError("focal alpha must be in (0, 1]")


@dataclass(frozen=True)
class ShotAnnotation:
    """KTS shots covering [0, T) plus a keyshot flag per shot."""

    shots: tuple[tuple[int, int], ...]  # [start, end) intervals
    keyshot: tuple[bool, ...]

    def __post_init__(self):
        if len(self.shots) != len(self.keyshot):
            raise ContractError("shots and keyshot flags differ in length")
        cursor = 0
        for start, end in self.shots:
            if start != cursor or end <= start:
                raise ContractError(f"shots do not partition [0, T): bad interval ({start}, {end})")
            cursor = end

    @property
    def n_frames(self) -> int:
        return self.shots[-1][1]

    def keyshot_intervals(self) -> list[tuple[int, int]]:
        return [s for s, flag in zip(self.shots, self.keyshot) if flag]

    def frame_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_frames, dtype=bool)
        for start, end in self.keyshot_intervals():
            mask[start:end] = True
        return mask


@dataclass
class FrameTargets:
    """Per-frame labels; offsets and center-ness are defined only where
    positive (NaN elsewhere)."""

    s: np.ndarray  # (T,) binary
    dl: np.ndarray  # (T,) float, NaN where s == 0
    dr: np.ndarray
    v: np.ndarray

    @property
    def positives(self) -> np.ndarray:
        return self.s > 0.5


def to_shot_level_annotation(
    user_scores: np.ndarray,
    features: FeatureSequence,
    budget_frac: float = 0.15,
    kts_max_segments: int | None = None,
    kts_penalty: float = 0.0,
) -> ShotAnnotation:
    from .postprocess import kts_segment, knapsack_select, segments_from_change_points, Shot

    scores = np.atleast_2d(np.asarray(user_scores, dtype=np.float64))
    if scores.size == 0:
        raise ContractError("empty user scores")
    if scores.shape[1] != features.T:
        raise ContractError(f"score length {scores.shape[1]} != feature T {features.T}")
    mean_scores = scores.mean(axis=0)
    t = features.T
    if kts_max_segments is None:
        kts_max_segments = int(np.ceil(t / 10))
    change_points = kts_segment(features, max_segments=kts_max_segments, penalty=kts_penalty)
    intervals = segments_from_change_points(change_points, t)
    shots = [
        Shot(start=a, end=b, importance=float(mean_scores[a:b].mean())) for a, b in intervals
    ]
    summary = knapsack_select(shots, budget_frames=int(np.floor(budget_frac * t)))
    return ShotAnnotation(shots=tuple(intervals), keyshot=tuple(summary.selected))


def compute_boundary(j: int, annotation: ShotAnnotation) -> tuple[float, float] | None:
    """Offsets to the keyshot edges, inclusive right index, or None if frame
    j is not inside a keyshot."""
    for start, end in annotation.keyshot_intervals():
        if start <= j < end:
            return (float(j - start), float(end - 1 - j))
    return None


def compute_centerness(dl: float, dr: float) -> float:
    if dl < 0 or dr < 0:
        raise ContractError("offsets must be >= 0")
    hi = max(dl, dr)
    if hi == 0.0:
        return 1.0  # single-frame keyshot: perfectly centered
    return float(np.sqrt(min(dl, dr) / hi))


def build_frame_targets(annotation: ShotAnnotation) -> FrameTargets:
    t = annotation.n_frames
    s = np.zeros(t)
    dl = np.full(t, np.nan)
    dr = np.full(t, np.nan)
    v = np.full(t, np.nan)
    for j in range(t):
        b = compute_boundary(j, annotation)
        if b is not None:
            s[j] = 1.0
            dl[j], dr[j] = b
            v[j] = compute_centerness(*b)
    return FrameTargets(s=s, dl=dl, dr=dr, v=v)


# ---------------------------------------------------------------------------
# Plain (untaped) loss terms; the taped versions in total_loss must agree
# with these, which the tests cross-check.


def focal_loss(s: np.ndarray, s_star: np.ndarray, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Mean over frames of -alpha * (1 - p_t)^gamma * log(p_t); reduces to
    BCE at alpha=1, gamma=0."""
    s = np.clip(np.asarray(s, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    s_star = np.asarray(s_star, dtype=np.float64)
    p_t = s_star * s + (1.0 - s_star) * (1.0 - s)
    return float(np.mean(-alpha * (1.0 - p_t) ** gamma * np.log(p_t)))


def tiou(d: tuple[float, float], d_star: tuple[float, float]) -> float:
    """Shared-anchor temporal IoU of two offset pairs; both intervals contain
    the anchor frame by construction."""
    dl, dr = d
    dl_s, dr_s = d_star
    if min(dl, dr, dl_s, dr_s) < 0:
        raise ContractError("offsets must be >= 0")
    denom = max(dl, dl_s) + max(dr, dr_s)
    if denom == 0.0:
        return 1.0  # both intervals are the bare anchor frame
    return (min(dl, dl_s) + min(dr, dr_s)) / denom


def tiou_loss(d: tuple[float, float], d_star: tuple[float, float]) -> float:
    return 1.0 - tiou(d, d_star)


def bce_loss(p: np.ndarray, target: np.ndarray) -> float:
    p = np.clip(np.asarray(p, dtype=np.float64), CLAMP, 1.0 - CLAMP)
    target = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))))


# ---------------------------------------------------------------------------
# Taped total loss


def _col(values: np.ndarray) -> Tensor2:
    return tk.tensor(np.asarray(values, dtype=np.float64)[:, None])


def total_loss(out: ForwardOutput, targets: FrameTargets, weights: LossWeights) -> Tensor2:
    """Differentiable L = L_cls + lambda * L_reg + mu * L_center (1x1,
    recorded on the active tape)."""
    t = out.s.rows
    if targets.s.shape[0] != t:
        raise ContractError(f"targets length {targets.s.shape[0]} != predictions length {t}")

    s_star = _col(targets.s)
    one_minus_star = _col(1.0 - targets.s)
    s = tk.clip(out.s, CLAMP, 1.0 - CLAMP)
    # p_t = s* . s + (1 - s*) . (1 - s)
    p_t = tk.add(tk.mul(s_star, s), tk.mul(one_minus_star, tk.shift(tk.scale(s, -1.0), 1.0)))
    modulator = tk.power(tk.shift(tk.scale(p_t, -1.0), 1.0), weights.focal_gamma)
    cls = tk.scale(tk.mean_all(tk.mul(modulator, tk.log(p_t))), -weights.focal_alpha)

    pos = targets.positives
    n_pos = int(pos.sum())
    if n_pos == 0:
        warnings.warn("no positive frames in targets; regression and center-ness terms are 0")
        return cls

    pos_mask = _col(pos.astype(np.float64))
    inv_n_pos = 1.0 / n_pos

    # tIoU regression over positives; NaN target entries are masked out, so
    # substitute zeros there to keep arithmetic finite.
    dl_star = _col(np.where(pos, targets.dl, 0.0))
    dr_star = _col(np.where(pos, targets.dr, 0.0))
    inter = tk.add(tk.minimum(out.dl, dl_star), tk.minimum(out.dr, dr_star))
    union = tk.add(tk.maximum(out.dl, dl_star), tk.maximum(out.dr, dr_star))
    tiou_frames = tk.div(inter, tk.shift(union, 1e-12))
    reg_terms = tk.mul(pos_mask, tk.shift(tk.scale(tiou_frames, -1.0), 1.0))
    reg = tk.scale(tk.sum_all(reg_terms), inv_n_pos)

    loss = tk.add(cls, tk.scale(reg, weights.lam))

    if out.v is not None and weights.mu > 0.0:
        v_star = _col(np.where(pos, targets.v, 0.0))
        v = tk.clip(out.v, CLAMP, 1.0 - CLAMP)
        bce_terms = tk.add(
            tk.mul(v_star, tk.log(v)),
            tk.mul(
                tk.shift(tk.scale(v_star, -1.0), 1.0),
                tk.log(tk.shift(tk.scale(v, -1.0), 1.0)),
            ),
        )
        center = tk.scale(tk.sum_all(tk.mul(pos_mask, bce_terms)), -inv_n_pos)
        loss = tk.add(loss, tk.scale(center, weights.mu))
    return loss


def loss_terms(out: ForwardOutput, targets: FrameTargets, weights: LossWeights) -> dict[str, float]:
    """Untaped per-term values for logging."""
    pred_s = out.s.data[:, 0]
    cls = focal_loss(pred_s, targets.s, weights.focal_alpha, weights.focal_gamma)
    pos = targets.positives
    if pos.sum() == 0:
        return {"cls": cls, "reg": 0.0, "center": 0.0, "total": cls}
    dl, dr = out.dl.data[:, 0], out.dr.data[:, 0]
    reg = float(
        np.mean(
            [
                tiou_loss((dl[j], dr[j]), (targets.dl[j], targets.dr[j]))
                for j in np.flatnonzero(pos)
            ]
        )
    )
    if out.v is not None and weights.mu > 0.0:
        center = bce_loss(out.v.data[pos, 0], targets.v[pos])
    else:
        center = 0.0
    total = cls + weights.lam * reg + weights.mu * center
    return {"cls": cls, "reg": reg, "center": center, "total": total}

"""Inference-time summary generation: per-frame segment proposals, greedy
NMS, KTS shot segmentation, shot scoring and exact 0/1 knapsack selection.

All stages are pure functions; `summarize` chains them and enforces the
15% frame budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .features import FeatureSequence
from .model import FramePredictions


@dataclass(frozen=True)
class Proposal:
    start: float
    end: float
    confidence: float

    def __post_init__(self):
        if self.end < self.start:
            raise ContractError(f"proposal end {self.end} < start {self.start}")
        if self.confidence < 0:
            raise ContractError("proposal confidence must be >= 0")


@dataclass(frozen=True)
class Shot:
    start: int
    end: int  # exclusive
    importance: float

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class Summary:
    shots: tuple[tuple[int, int], ...]
    selected: tuple[bool, ...]
    mask: np.ndarray  # (T,) bool
    budget: int

    @property
    def n_selected_frames(self) -> int:
        return int(self.mask.sum())

    def to_record(self, video_id: str) -> dict:
        runs = []
        in_run = False
        for j, val in enumerate(self.mask):
            if val and not in_run:
                runs.append([j, 1])
                in_run = True
            elif val:
                runs[-1][1] += 1
            else:
                in_run = False
        return {
            "video_id": video_id,
            "shots": [list(s) for s in self.shots],
            "selected": [i for i, sel in enumerate(self.selected) if sel],
            "mask_rle": runs,
            "budget": self.budget,
            "n_selected_frames": self.n_selected_frames,
            "n_frames": int(self.mask.shape[0]),
        }

    def to_json(self, video_id: str) -> str:
        return json.dumps(self.to_record(video_id), sort_keys=True)


@dataclass(frozen=True)
class PostprocessConfig:
    min_confidence: float = 0.0
    nms_iou: float = 0.5
    budget_frac: float = 0.15
    kts_penalty: float = 0.0
    kts_max_segments: int | None = None  # None -> ceil(T / 10)
    frame_score_mode: str = "nms_max"  # or "raw" (s_j * v_j directly)


def make_proposals(pred: FramePredictions, min_confidence: float = 0.0) -> list[Proposal]:
    """One candidate per frame: [j - dl, j + dr] clamped to the video,
    confidence co_j = s_j * v_j. Proposals below min_confidence are dropped."""
    t = pred.s.shape[0]
    out = []
    for j in range(t):
        co = float(pred.s[j] * pred.v[j])
        if co < min_confidence:
            continue
        out.append(
            Proposal(
                start=max(0.0, j - float(pred.dl[j])),
                end=min(float(t - 1), j + float(pred.dr[j])),
                confidence=co,
            )
        )
    return out


def interval_iou(a: Proposal, b: Proposal) -> float:
    inter = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = (a.end - a.start) + (b.end - b.start) - inter
    if union <= 0.0:
        return 1.0 if (a.start == b.start and a.end == b.end) else 0.0
    return inter / union


def nms(proposals: list[Proposal], iou_threshold: float = 0.5) -> list[Proposal]:
    """Greedy suppression; ties on confidence broken by earlier start then
    original index. Output sorted by confidence descending."""
    if not (0.0 <= iou_threshold <= 1.0):
        raise ContractError(f"iou_threshold must be in [0,1], got {iou_threshold}")
    order = sorted(
        range(len(proposals)),
        key=lambda i: (-proposals[i].confidence, proposals[i].start, i),
    )
    kept: list[Proposal] = []
    for i in order:
        p = proposals[i]
        if all(interval_iou(p, q) <= iou_threshold for q in kept):
            kept.append(p)
    return kept


# ---------------------------------------------------------------------------
# KTS


def _segment_costs(features: FeatureSequence) -> np.ndarray:
    """cost[a, b] = within-segment scatter of frames [a, b) under the linear
    kernel on unit-normalized features."""
    f = features.data.astype(np.float64)
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    f = f / np.maximum(norms, 1e-12)
    gram = f @ f.T
    t = f.shape[0]
    # integral image of the gram matrix, padded with a zero row/col
    p = np.zeros((t + 1, t + 1))
    p[1:, 1:] = gram.cumsum(axis=0).cumsum(axis=1)
    diag_cum = np.concatenate([[0.0], np.diag(gram).cumsum()])
    cost = np.full((t + 1, t + 1), np.inf)
    for a in range(t):
        for b in range(a + 1, t + 1):
            block = p[b, b] - p[a, b] - p[b, a] + p[a, a]
            cost[a, b] = (diag_cum[b] - diag_cum[a]) - block / (b - a)
    return cost


def kts_segment(
    features: FeatureSequence, max_segments: int, penalty: float = 0.0
) -> list[int]:
    """Change points minimizing total within-segment scatter plus
    penalty * n_segments, exact DP; ties prefer fewer segments. Returned
    change points are segment start indices (excluding 0)."""
    t = features.T
    if t < 2:
        raise ContractError(f"KTS needs T >= 2, got T={t}")
    max_segments = max(1, min(max_segments, t))
    cost = _segment_costs(features)
    # dp[k][b] = min scatter splitting frames [0, b) into k segments
    dp = np.full((max_segments + 1, t + 1), np.inf)
    back = np.zeros((max_segments + 1, t + 1), dtype=int)
    dp[0, 0] = 0.0
    for k in range(1, max_segments + 1):
        for b in range(k, t + 1):
            cands = dp[k - 1, k - 1 : b] + cost[k - 1 : b, b]
            a_rel = int(np.argmin(cands))
            dp[k, b] = cands[a_rel]
            back[k, b] = a_rel + k - 1
    best_k = 1
    best_obj = dp[1, t] + penalty
    for k in range(2, max_segments + 1):
        obj = dp[k, t] + penalty * k
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_k = k
    boundaries = []
    b = t
    for k in range(best_k, 0, -1):
        a = back[k, b]
        if a > 0:
            boundaries.append(int(a))
        b = a
    return sorted(boundaries)


def segments_from_change_points(change_points: list[int], t: int) -> list[tuple[int, int]]:
    edges = [0] + list(change_points) + [t]
    return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]


# ---------------------------------------------------------------------------
# Shot scoring and knapsack


def project_frame_scores(kept: list[Proposal], t: int) -> np.ndarray:
    """Frame score = max confidence among kept proposals covering the frame,
    0 where uncovered."""
    scores = np.zeros(t)
    for p in kept:
        lo = int(np.ceil(p.start - 1e-9))
        hi = int(np.floor(p.end + 1e-9))
        lo = max(0, lo)
        hi = min(t - 1, hi)
        if hi >= lo:
            scores[lo : hi + 1] = np.maximum(scores[lo : hi + 1], p.confidence)
    return scores


def score_shots(frame_scores: np.ndarray, shots: list[tuple[int, int]]) -> list[Shot]:
    if shots[0][0] != 0 or shots[-1][1] != len(frame_scores):
        raise ContractError("shots must partition [0, T)")
    return [
        Shot(start=a, end=b, importance=float(frame_scores[a:b].mean())) for a, b in shots
    ]


def knapsack_select(shots: list[Shot], budget_frames: int) -> Summary:
    """Exact 0/1 knapsack over (shots x budget); among optimal solutions,
    prefer including lower shot indices first."""
    if budget_frames < 0:
        raise ContractError("budget must be >= 0")
    c = len(shots)
    t = shots[-1].end if shots else 0
    # best[i][b]: max value using shots i.. with budget b
    best = np.zeros((c + 1, budget_frames + 1))
    for i in range(c - 1, -1, -1):
        best[i] = best[i + 1]
        li = shots[i].length
        if li <= budget_frames:
            take = shots[i].importance + best[i + 1, : budget_frames - li + 1]
            best[i, li:] = np.maximum(best[i + 1, li:], take)
    selected = [False] * c
    b = budget_frames
    for i in range(c):
        li = shots[i].length
        if li <= b and shots[i].importance + best[i + 1, b - li] >= best[i, b] - 1e-12:
            selected[i] = True
            b -= li
    mask = np.zeros(t, dtype=bool)
    for shot, sel in zip(shots, selected):
        if sel:
            mask[shot.start : shot.end] = True
    return Summary(
        shots=tuple((s.start, s.end) for s in shots),
        selected=tuple(selected),
        mask=mask,
        budget=budget_frames,
    )


def summarize(
    pred: FramePredictions,
    features: FeatureSequence,
    config: PostprocessConfig = PostprocessConfig(),
) -> Summary:
    """Full pipeline: proposals -> NMS -> KTS -> shot scoring -> knapsack."""
    t = features.T
    if pred.s.shape[0] != t:
        raise ContractError(f"predictions T={pred.s.shape[0]} != features T={t}")
    proposals = make_proposals(pred, config.min_confidence)
    kept = nms(proposals, config.nms_iou)
    if config.frame_score_mode == "raw":
        frame_scores = pred.s * pred.v
    else:
        frame_scores = project_frame_scores(kept, t)
    max_segments = config.kts_max_segments or int(np.ceil(t / 10))
    change_points = kts_segment(features, max_segments=max_segments, penalty=config.kts_penalty)
    shots = score_shots(frame_scores, segments_from_change_points(change_points, t))
    return knapsack_select(shots, budget_frames=int(np.floor(config.budget_frac * t)))

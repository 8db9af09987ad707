"""Sklearn-style wrapper so the summarizer composes with the wider
ecosystem: fit on (visual, audio) feature pairs with per-user scores,
predict binary frame-inclusion masks."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ContractError
from .features import Dataset, FeatureSequence, VideoRecord
from .model import ModelConfig, forward
from .postprocess import PostprocessConfig, summarize
from .training import TrainConfig, train


def check_feature_pair(x) -> tuple[np.ndarray, np.ndarray]:
    """Validate one (visual, audio) sample: 2-D, finite, equal T."""
    if not isinstance(x, (tuple, list)) or len(x) != 2:
        raise ContractError("each sample must be a (visual, audio) pair of arrays")
    visual = np.asarray(x[0], dtype=np.float64)
    audio = np.asarray(x[1], dtype=np.float64)
    for name, arr in (("visual", visual), ("audio", audio)):
        if arr.ndim != 2:
            raise ContractError(f"{name} features must be 2-D (T x d), got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ContractError(f"{name} features contain non-finite values")
    if visual.shape[0] != audio.shape[0]:
        raise ContractError(
            f"modality length mismatch: visual T={visual.shape[0]}, audio T={audio.shape[0]}"
        )
    return visual, audio


class VideoSummarizer(BaseEstimator):
    """fit(X, y) / predict(X) interface over the full pipeline.

    X: list of (visual T x d_v, audio T x d_a) array pairs.
    y: list of U x T per-user importance score arrays in [0, 1].
    predict returns one boolean frame mask per sample.
    """

    def __init__(
        self,
        d_model=32,
        n_heads=2,
        n_cross_layers=1,
        n_fusion_layers=1,
        align_window=2,
        head_hidden=32,
        use_layer_norm=True,
        use_ffn=True,
        use_audio=True,
        use_align_mask=True,
        use_centerness=True,
        epochs=100,
        lr=1e-3,
        lam=1.0,
        mu=1.0,
        budget_frac=0.15,
        nms_iou=0.5,
        grad_clip=10.0,
        seed=0,
    ):
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_cross_layers = n_cross_layers
        self.n_fusion_layers = n_fusion_layers
        self.align_window = align_window
        self.head_hidden = head_hidden
        self.use_layer_norm = use_layer_norm
        self.use_ffn = use_ffn
        self.use_audio = use_audio
        self.use_align_mask = use_align_mask
        self.use_centerness = use_centerness
        self.epochs = epochs
        self.lr = lr
        self.lam = lam
        self.mu = mu
        self.budget_frac = budget_frac
        self.nms_iou = nms_iou
        self.grad_clip = grad_clip
        self.seed = seed

    def _model_config(self, d_v: int, d_a: int) -> ModelConfig:
        return ModelConfig(
            d_v=d_v,
            d_a=d_a,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_cross_layers=self.n_cross_layers,
            n_fusion_layers=self.n_fusion_layers,
            align_window=self.align_window,
            head_hidden=self.head_hidden,
            use_layer_norm=self.use_layer_norm,
            use_ffn=self.use_ffn,
            use_audio=self.use_audio,
            use_align_mask=self.use_align_mask,
            use_centerness=self.use_centerness,
        )

    def _post_config(self) -> PostprocessConfig:
        return PostprocessConfig(budget_frac=self.budget_frac, nms_iou=self.nms_iou)

    def _to_dataset(self, X, y) -> Dataset:
        if len(X) != len(y):
            raise ContractError(f"X and y lengths differ: {len(X)} vs {len(y)}")
        records = []
        for i, (x, scores) in enumerate(zip(X, y)):
            visual, audio = check_feature_pair(x)
            records.append(
                VideoRecord(
                    video_id=f"sample{i:04d}",
                    visual=FeatureSequence("visual", visual.astype(np.float32)),
                    audio=FeatureSequence("audio", audio.astype(np.float32)),
                    fps=2.0,
                    user_scores=np.atleast_2d(np.asarray(scores, dtype=np.float64)),
                )
            )
        return Dataset(tuple(records))

    def fit(self, X, y):
        dataset = self._to_dataset(X, y)
        d_v = dataset.videos[0].visual.dim
        d_a = dataset.videos[0].audio.dim
        self.model_config_ = self._model_config(d_v, d_a)
        train_config = TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            lam=self.lam,
            mu=self.mu,
            seed=self.seed,
            budget_frac=self.budget_frac,
            grad_clip=self.grad_clip,
        )
        self.params_, self.report_ = train(dataset, self.model_config_, train_config)
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            raise ContractError("predict called before fit")
        masks = []
        for x in X:
            visual, audio = check_feature_pair(x)
            vseq = FeatureSequence("visual", visual.astype(np.float32))
            aseq = FeatureSequence("audio", audio.astype(np.float32))
            out = forward(vseq, aseq, self.params_, self.model_config_, train=False)
            masks.append(summarize(out.predictions(), vseq, self._post_config()).mask)
        return masks

    def score(self, X, y):
        """Mean max-over-users F-score."""
        from .evaluation import fscore, user_mask_from_scores

        masks = self.predict(X)
        fs = []
        for x, mask, scores in zip(X, masks, y):
            visual, _ = check_feature_pair(x)
            vseq = FeatureSequence("visual", visual.astype(np.float32))
            rows = np.atleast_2d(np.asarray(scores, dtype=np.float64))
            per_user = [
                fscore(mask, user_mask_from_scores(row, vseq, self.budget_frac))[2]
                for row in rows
            ]
            fs.append(max(per_user))
        return float(np.mean(fs))

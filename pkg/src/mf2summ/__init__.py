"""Audio-visual video summarization: cross-modal transformer fusion,
multi-task segment prediction, and classical keyshot selection."""

from .errors import (
    ConfigError,
    ContractError,
    DataError,
    Mf2Error,
    NumericalError,
    ParseError,
    ShapeError,
)
from .estimator import VideoSummarizer
from .evaluation import EvalResult, evaluate, fscore, make_folds, user_mask_from_scores
from .features import (
    Dataset,
    FeatureSequence,
    VideoRecord,
    gen_synthetic_fixture,
    load_manifest,
    read_features,
    write_features,
)
from .labels import (
    FrameTargets,
    LossWeights,
    ShotAnnotation,
    build_frame_targets,
    compute_boundary,
    compute_centerness,
    focal_loss,
    tiou_loss,
    to_shot_level_annotation,
    total_loss,
)
from .model import (
    FramePredictions,
    ModelConfig,
    ModelParams,
    build_alignment_mask,
    forward,
    init_params,
    load_checkpoint,
    positional_encoding,
    save_checkpoint,
)
from .postprocess import (
    PostprocessConfig,
    Proposal,
    Shot,
    Summary,
    knapsack_select,
    kts_segment,
    make_proposals,
    nms,
    score_shots,
    summarize,
)
from .tensor import AdamState, GradTape, Tensor2, adam_step, backward, matmul, softmax_rows
from .training import TrainConfig, TrainReport, train

__version__ = "0.1.0"

"""Correlation-guided reference aggregation: encoders, correlation maps,
top-k selection, the multi-view decoder, and the toy trainable regressor."""

from .types import (
    CorrelationMap,
    MultiScaleRefFeatures,
    PcfaConfig,
    RefFeatureStack,
    SelectedFeatures,
)
from .encoder import (
    encode_pose,
    encode_refs,
    init_pose_encoder,
    init_ref_encoder,
    multiscale_features,
    token_fg_mask,
)
from .correlate import (
    correlate,
    init_correlator,
    interp_correlation,
    refine_pose_tokens,
)
from .gridops import avgpool_matrix, bilinear_matrix, mean_over_refs_matrix, pool2_matrix
from .select import select_topk, topk_count
from .decoder import (
    STRATEGIES,
    decode_views,
    init_decoder,
    ref_tokens_concat,
    ref_tokens_mean,
)
from .train import (
    I2mvTrainConfig,
    TrainResult,
    duplicate_refs,
    i2mv_forward,
    init_i2mv_params,
    l2_image_loss,
    smoothed_curve,
    train_i2mv,
)
from .memory import MemoryRow, measure_aggregation, memory_report, rows_to_csv

__all__ = [
    "CorrelationMap",
    "MultiScaleRefFeatures",
    "PcfaConfig",
    "RefFeatureStack",
    "SelectedFeatures",
    "encode_pose",
    "encode_refs",
    "init_pose_encoder",
    "init_ref_encoder",
    "multiscale_features",
    "token_fg_mask",
    "correlate",
    "init_correlator",
    "interp_correlation",
    "refine_pose_tokens",
    "avgpool_matrix",
    "bilinear_matrix",
    "mean_over_refs_matrix",
    "pool2_matrix",
    "select_topk",
    "topk_count",
    "STRATEGIES",
    "decode_views",
    "init_decoder",
    "ref_tokens_concat",
    "ref_tokens_mean",
    "I2mvTrainConfig",
    "TrainResult",
    "duplicate_refs",
    "i2mv_forward",
    "init_i2mv_params",
    "l2_image_loss",
    "smoothed_curve",
    "train_i2mv",
    "MemoryRow",
    "measure_aggregation",
    "memory_report",
    "rows_to_csv",
]

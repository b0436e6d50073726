"""Pose-to-reference correlation maps.

A small transformer refines pose tokens against the reference stack;
the refined queries score every reference token, scores are averaged
over the query dimension, box-smoothed per reference block, rectified,
and multiplied by the foreground mask when one is present.
"""

from __future__ import annotations

import numpy as np

from ..errors import LayoutError
from ..layers import add_attention_params, attention_params_from
from ..numerics import (
    Var,
    add,
    attention_var,
    matmul,
    matmul_bt,
    mean_axis0,
    mul,
    relu,
    reshape,
    scale,
    slice_rows,
    concat,
)
from ..params import ParamStore
from .encoder import encode_pose, init_pose_encoder
from .gridops import avgpool_matrix, bilinear_matrix
from .types import CorrelationMap, PcfaConfig, RefFeatureStack


def init_correlator(store: ParamStore, rng, cfg: PcfaConfig, prefix: str = "corr") -> None:
    init_pose_encoder(store, rng, cfg, prefix + ".pose")
    for i in range(cfg.transformer_depth):
        add_attention_params(store, rng, f"{prefix}.self{i}", cfg.d_model, cfg.heads)
        add_attention_params(store, rng, f"{prefix}.cross{i}", cfg.d_model, cfg.heads)
    store.add(
        prefix + ".w_q",
        rng.normal(0.0, 1.0 / np.sqrt(cfg.d_model), (cfg.d_model, cfg.corr_width)),
    )
    store.add(
        prefix + ".w_k",
        rng.normal(0.0, 1.0 / np.sqrt(cfg.d_model), (cfg.d_model, cfg.corr_width)),
    )


def refine_pose_tokens(
    pose_map: np.ndarray,
    refs: RefFeatureStack,
    store: ParamStore,
    cfg: PcfaConfig,
    prefix: str = "corr",
) -> Var:
    """Alternating self/cross attention over the pose tokens (residual)."""
    o = encode_pose(pose_map, store, cfg, prefix + ".pose")
    for i in range(cfg.transformer_depth):
        o = add(o, attention_var(o, o, o, attention_params_from(store, f"{prefix}.self{i}", cfg.heads)))
        o = add(
            o,
            attention_var(
                o,
                refs.features,
                refs.features,
                attention_params_from(store, f"{prefix}.cross{i}", cfg.heads),
            ),
        )
    return o


def correlate(
    pose_map: np.ndarray,
    refs: RefFeatureStack,
    store: ParamStore,
    cfg: PcfaConfig,
    prefix: str = "corr",
) -> CorrelationMap:
    """Score every reference token against one target pose.

    Masked tokens come out exactly 0 because the mask multiplies after
    the rectifier. Gradients flow to both encoders and the projections.
    """
    n, h, w = refs.layout
    if refs.width != cfg.d_model:
        raise LayoutError(f"reference width {refs.width} vs d_model {cfg.d_model}")
    o = refine_pose_tokens(pose_map, refs, store, cfg, prefix)
    q = matmul(o, store.get(prefix + ".w_q"))
    k = matmul(refs.features, store.get(prefix + ".w_k"))
    scores = scale(matmul_bt(q, k), 1.0 / np.sqrt(cfg.corr_width))
    col = reshape(mean_axis0(scores), (n * h * w, 1))
    pool = Var(avgpool_matrix(h, w, cfg.pool))
    blocks = [
        matmul(pool, slice_rows(col, i * h * w, (i + 1) * h * w)) for i in range(n)
    ]
    smoothed = concat(blocks, axis=0) if n > 1 else blocks[0]
    act = relu(smoothed)
    if refs.token_mask is not None:
        act = mul(act, refs.token_mask.astype(np.float64).reshape(-1, 1))
    return CorrelationMap(act, refs.layout)


def interp_correlation(cmap: CorrelationMap, target_hw) -> CorrelationMap:
    """Bilinear-resize each reference block to a new grid.

    target_hw is either a side length of a square grid or an explicit
    (h, w) pair; weights are nonnegative so values stay nonnegative.
    """
    if np.isscalar(target_hw):
        target_hw = (int(target_hw), int(target_hw))
    th, tw = int(target_hw[0]), int(target_hw[1])
    n, h, w = cmap.layout
    if (th, tw) == (h, w):
        return CorrelationMap(cmap.values, cmap.layout)
    mat = Var(bilinear_matrix(h, w, th, tw))
    blocks = [
        matmul(mat, slice_rows(cmap.values, i * h * w, (i + 1) * h * w))
        for i in range(n)
    ]
    col = concat(blocks, axis=0) if n > 1 else blocks[0]
    return CorrelationMap(col, (n, th, tw))

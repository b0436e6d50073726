"""Multi-view decoder: pose guider, stacked three-branch blocks, readout.

Block k attends to reference tokens from pyramid level k, so the block
count equals the pyramid depth. Readout is a layer norm plus a linear
map back to patch pixels.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError
from ..layers import add_attention_params, add_layer_norm_params, attention_params_from
from ..numerics import (
    Var,
    add,
    concat,
    layer_norm,
    matmul,
    parallel_block_var,
    permute,
    reshape,
)
from ..params import ParamStore
from .encoder import encode_pose, init_pose_encoder
from .gridops import mean_over_refs_matrix
from .types import MultiScaleRefFeatures, PcfaConfig, SelectedFeatures

STRATEGIES = ("topk", "concat", "mean")


def init_decoder(store: ParamStore, rng, cfg: PcfaConfig, prefix: str = "dec") -> None:
    init_pose_encoder(store, rng, cfg, prefix + ".pose")
    for k in range(cfg.levels):
        for branch in ("self", "mv", "ref"):
            add_attention_params(
                store, rng, f"{prefix}.block{k}.{branch}", cfg.d_model, cfg.heads,
                out_scale=0.5,
            )
    add_layer_norm_params(store, prefix + ".out_ln", cfg.d_model)
    out_dim = cfg.patch_size * cfg.patch_size * cfg.channels
    store.add(prefix + ".w_out", rng.normal(0.0, 0.02, (cfg.d_model, out_dim)))
    store.add(prefix + ".b_out", np.zeros(out_dim))


def _ref_token_list(entry, n_views: int):
    if isinstance(entry, (list, tuple)):
        if len(entry) != n_views:
            raise DimensionError(
                f"per-view reference tokens: got {len(entry)}, expected {n_views}"
            )
        return [e.values if isinstance(e, SelectedFeatures) else e for e in entry]
    return entry.values if isinstance(entry, SelectedFeatures) else entry


def decode_views(
    pose_maps: np.ndarray,
    ref_tokens_per_level: list,
    store: ParamStore,
    cfg: PcfaConfig,
    prefix: str = "dec",
) -> Var:
    """Regress M view images from pose maps and per-level reference tokens.

    ref_tokens_per_level has one entry per decoder block: either a token
    variable shared by all views or a per-view list (the selected-token
    path). Returns a (M, H, W, channels) variable.
    """
    pose_maps = np.asarray(pose_maps, dtype=np.float64)
    if pose_maps.ndim == 3:
        pose_maps = pose_maps[None]
    m = pose_maps.shape[0]
    if len(ref_tokens_per_level) != cfg.levels:
        raise ContractError(
            f"got reference tokens for {len(ref_tokens_per_level)} blocks, "
            f"decoder has {cfg.levels}"
        )
    g = cfg.grid
    f = concat(
        [encode_pose(pm, store, cfg, prefix + ".pose") for pm in pose_maps], axis=0
    ) if m > 1 else encode_pose(pose_maps[0], store, cfg, prefix + ".pose")
    for k in range(cfg.levels):
        params = {
            branch: attention_params_from(store, f"{prefix}.block{k}.{branch}", cfg.heads)
            for branch in ("self", "mv", "ref")
        }
        f = parallel_block_var(f, _ref_token_list(ref_tokens_per_level[k], m), (m, g, g), params)
    f = layer_norm(f, store.get(prefix + ".out_ln.gain"), store.get(prefix + ".out_ln.bias"))
    y = add(matmul(f, store.get(prefix + ".w_out")), store.get(prefix + ".b_out"))
    p, c = cfg.patch_size, cfg.channels
    y = reshape(y, (m, g, g, p, p, c))
    y = permute(y, (0, 1, 3, 2, 4, 5))
    return reshape(y, (m, g * p, g * p, c))


def ref_tokens_concat(pyramid: MultiScaleRefFeatures) -> list:
    """Full stacks as key/value tokens: memory grows linearly with refs."""
    return [lvl.features for lvl in pyramid.levels]


def ref_tokens_mean(pyramid: MultiScaleRefFeatures) -> list:
    """Token-slot average across references: constant but lossy."""
    out = []
    for lvl in pyramid.levels:
        n, h, w = lvl.layout
        out.append(matmul(Var(mean_over_refs_matrix(n, h * w)), lvl.features))
    return out

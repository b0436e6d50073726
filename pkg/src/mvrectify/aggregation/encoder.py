"""Reference and pose-map encoders plus the feature pyramid."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError
from ..layers import add_patch_embed, embed_patches
from ..numerics import Var, add, concat, matmul, relu, slice_rows
from ..params import ParamStore
from .gridops import pool2_matrix
from .types import MultiScaleRefFeatures, PcfaConfig, RefFeatureStack


def init_ref_encoder(store: ParamStore, rng, cfg: PcfaConfig, prefix: str = "enc") -> None:
    add_patch_embed(
        store, rng, prefix, cfg.patch_size, cfg.channels, cfg.d_model, cfg.tokens_per_ref
    )


def token_fg_mask(masks: np.ndarray, patch: int) -> np.ndarray:
    """A token is foreground when any pixel of its patch is foreground."""
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 2:
        masks = masks[None]
    n, h, w = masks.shape
    gh, gw = h // patch, w // patch
    per = masks.reshape(n, gh, patch, gw, patch).any(axis=(2, 4))
    return per.reshape(n * gh * gw)


def encode_refs(
    images: np.ndarray,
    masks: np.ndarray | None,
    store: ParamStore,
    cfg: PcfaConfig,
    prefix: str = "enc",
) -> RefFeatureStack:
    """Patch-embed N same-resolution references into one token stack.

    Positional encodings are per image only, so the stack carries no
    signal about reference order beyond block position.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    n, h, w, c = images.shape
    if h != cfg.resolution or w != cfg.resolution:
        raise ContractError(
            f"reference resolution {h}x{w} does not match config {cfg.resolution}"
        )
    if c != cfg.channels:
        raise DimensionError(f"expected {cfg.channels} channels, got {c}")
    tokens = embed_patches(store, prefix, images, cfg.patch_size)
    mask = None
    if masks is not None:
        masks = np.asarray(masks, dtype=bool)
        if masks.ndim == 2:
            masks = masks[None]
        if masks.shape != (n, h, w):
            raise DimensionError(f"masks shape {masks.shape} vs images {(n, h, w)}")
        mask = token_fg_mask(masks, cfg.patch_size)
    return RefFeatureStack(tokens, (n, cfg.grid, cfg.grid), mask)


def init_pose_encoder(store: ParamStore, rng, cfg: PcfaConfig, prefix: str) -> None:
    """Small convolutional stack: patch projection, relu, 1x1 mixing."""
    add_patch_embed(
        store, rng, prefix, cfg.patch_size, cfg.channels, cfg.d_model, cfg.tokens_per_ref
    )
    store.add(
        prefix + ".w_mix",
        rng.normal(0.0, 1.0 / np.sqrt(cfg.d_model), (cfg.d_model, cfg.d_model)),
    )
    store.add(prefix + ".b_mix", np.zeros(cfg.d_model))


def encode_pose(pose_map: np.ndarray, store: ParamStore, cfg: PcfaConfig, prefix: str) -> Var:
    """Tokens for one (H, W, 3) pose-condition image: (grid*grid, d_model)."""
    pose_map = np.asarray(pose_map, dtype=np.float64)
    if pose_map.shape != (cfg.resolution, cfg.resolution, cfg.channels):
        raise DimensionError(
            f"pose map shape {pose_map.shape}, expected "
            f"{(cfg.resolution, cfg.resolution, cfg.channels)}"
        )
    t = embed_patches(store, prefix, pose_map, cfg.patch_size)
    t = relu(t)
    return add(matmul(t, store.get(prefix + ".w_mix")), store.get(prefix + ".b_mix"))


def multiscale_features(stack: RefFeatureStack, cfg: PcfaConfig) -> MultiScaleRefFeatures:
    """Build the pyramid by repeated per-reference 2x2 average pooling.

    Coarse token masks use any-foreground pooling so a coarse token is
    foreground when any of its children is.
    """
    levels = [stack]
    for _ in range(1, cfg.levels):
        prev = levels[-1]
        n, h, w = prev.layout
        pool = Var(pool2_matrix(h, w))
        blocks = [
            matmul(pool, slice_rows(prev.features, i * h * w, (i + 1) * h * w))
            for i in range(n)
        ]
        feats = concat(blocks, axis=0) if n > 1 else blocks[0]
        mask = None
        if prev.token_mask is not None:
            m = prev.token_mask.reshape(n, h // 2, 2, w // 2, 2)
            mask = m.any(axis=(2, 4)).reshape(-1)
        levels.append(RefFeatureStack(feats, (n, h // 2, w // 2), mask))
    return MultiScaleRefFeatures(levels)

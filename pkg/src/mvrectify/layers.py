"""Shared parameter-building helpers for attention stacks and patch embeddings."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError
from .numerics import AttentionParams, Var, add, concat, matmul
from .params import ParamStore


def add_attention_params(
    store: ParamStore,
    rng: np.random.Generator,
    prefix: str,
    d_q: int,
    heads: int,
    d_kv: int | None = None,
    width: int | None = None,
    d_out: int | None = None,
    out_scale: float = 1.0,
) -> None:
    """Register the four projections of one attention branch.

    w_q/w_k/w_v/w_o land under ``prefix + ".w_q"`` etc. The output
    projection is stored (d_out, width) because attention applies it
    transposed; ``out_scale`` shrinks it for residual stacks.
    """
    d_kv = d_q if d_kv is None else d_kv
    width = d_q if width is None else width
    d_out = d_q if d_out is None else d_out
    if width % heads:
        raise DimensionError(f"width {width} not divisible by heads {heads}")
    store.add(prefix + ".w_q", rng.normal(0.0, 1.0 / np.sqrt(d_q), (d_q, width)))
    store.add(prefix + ".w_k", rng.normal(0.0, 1.0 / np.sqrt(d_kv), (d_kv, width)))
    store.add(prefix + ".w_v", rng.normal(0.0, 1.0 / np.sqrt(d_kv), (d_kv, width)))
    store.add(
        prefix + ".w_o", rng.normal(0.0, out_scale / np.sqrt(d_out), (d_out, width))
    )


def attention_params_from(store: ParamStore, prefix: str, heads: int) -> AttentionParams:
    return AttentionParams(
        w_q=store.get(prefix + ".w_q"),
        w_k=store.get(prefix + ".w_k"),
        w_v=store.get(prefix + ".w_v"),
        w_o=store.get(prefix + ".w_o"),
        heads=heads,
    )


def add_layer_norm_params(store: ParamStore, prefix: str, width: int) -> None:
    store.add(prefix + ".gain", np.ones(width))
    store.add(prefix + ".bias", np.zeros(width))


def add_patch_embed(
    store: ParamStore,
    rng: np.random.Generator,
    prefix: str,
    patch: int,
    channels: int,
    d_model: int,
    n_tokens: int,
) -> None:
    fan_in = patch * patch * channels
    store.add(
        prefix + ".w_patch", rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, d_model))
    )
    store.add(prefix + ".b_patch", np.zeros(d_model))
    store.add(prefix + ".pos", rng.normal(0.0, 0.02, (n_tokens, d_model)))


def patch_rows(image: np.ndarray, patch: int) -> np.ndarray:
    """Flatten one (H, W, C) image into (grid*grid, patch*patch*C) rows."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise DimensionError(f"expected (H, W, C) image, got shape {img.shape}")
    h, w, c = img.shape
    if h % patch or w % patch:
        raise ContractError(f"image {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    rows = img.reshape(gh, patch, gw, patch, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(rows.reshape(gh * gw, patch * patch * c))


def embed_patches(
    store: ParamStore, prefix: str, images: np.ndarray, patch: int
) -> Var:
    """Embed a batch of images into patch tokens with shared projections.

    Positional encodings repeat per image so token features carry no
    cross-image ordering signal. Returns (n_images * tokens, d_model).
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    rows = np.concatenate([patch_rows(img, patch) for img in images], axis=0)
    w = store.get(prefix + ".w_patch")
    b = store.get(prefix + ".b_patch")
    pos = store.get(prefix + ".pos")
    n_tokens = pos.value.shape[0]
    per_image = rows.shape[0] // len(images)
    if per_image != n_tokens:
        raise DimensionError(
            f"image yields {per_image} tokens but positional table has {n_tokens}"
        )
    tokens = add(matmul(Var(rows), w), b)
    if len(images) == 1:
        return add(tokens, pos)
    return add(tokens, concat([pos] * len(images), axis=0))

"""Toy image-to-multiview regressor built on the aggregation pathway.

References are encoded once per step; each target view scores the
reference tokens against its own pose condition, keeps the top slice
per pyramid level, and the decoder regresses the view image. Trained
with plain L2 against rendered targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..numerics import Var, backward, mul, scale, sub, sum_all
from ..params import ParamStore, SgdMomentum
from .correlate import correlate, init_correlator, interp_correlation
from .decoder import STRATEGIES, decode_views, init_decoder, ref_tokens_concat, ref_tokens_mean
from .encoder import encode_refs, init_ref_encoder, multiscale_features
from .select import select_topk
from .types import PcfaConfig


@dataclass
class I2mvTrainConfig:
    steps: int = 600
    lr: float = 0.03
    momentum: float = 0.9
    warmup: int = 40
    refs_min: int = 3
    refs_max: int = 8
    log_every: int = 25
    target: str = "rgb"

    def __post_init__(self):
        if self.steps < 1:
            raise ContractError(f"steps must be positive, got {self.steps}")
        if not 2 <= self.refs_min <= self.refs_max:
            raise ContractError(
                f"need 2 <= refs_min <= refs_max, got {self.refs_min}, {self.refs_max}"
            )
        if self.target not in ("rgb", "normal"):
            raise ContractError(f"unknown target {self.target!r}")


def init_i2mv_params(cfg: PcfaConfig, seed: int) -> ParamStore:
    rng = np.random.default_rng(np.random.SeedSequence([0x12A6, seed]))
    store = ParamStore()
    init_ref_encoder(store, rng, cfg)
    init_correlator(store, rng, cfg)
    init_decoder(store, rng, cfg)
    return store


def duplicate_refs(images: np.ndarray, masks: np.ndarray, minimum: int):
    """Tile a too-small reference set up to the requested minimum."""
    images = np.asarray(images)
    masks = np.asarray(masks)
    if images.ndim == 3:
        images = images[None]
    if masks.ndim == 2:
        masks = masks[None]
    if len(images) >= minimum:
        return images, masks
    reps = -(-minimum // len(images))
    return (
        np.tile(images, (reps, 1, 1, 1))[:minimum],
        np.tile(masks, (reps, 1, 1))[:minimum],
    )


def i2mv_forward(
    store: ParamStore,
    cfg: PcfaConfig,
    ref_images: np.ndarray,
    ref_masks: np.ndarray | None,
    pose_maps: np.ndarray,
    strategy: str = "topk",
) -> Var:
    """Predict view images: (M, resolution, resolution, channels) variable."""
    if strategy not in STRATEGIES:
        raise ContractError(f"unknown strategy {strategy!r}, know {STRATEGIES}")
    stack = encode_refs(ref_images, ref_masks, store, cfg)
    pyramid = multiscale_features(stack, cfg)
    pose_maps = np.asarray(pose_maps, dtype=np.float64)
    if pose_maps.ndim == 3:
        pose_maps = pose_maps[None]
    if strategy == "concat":
        ref_tokens = ref_tokens_concat(pyramid)
    elif strategy == "mean":
        ref_tokens = ref_tokens_mean(pyramid)
    else:
        ref_tokens = [[] for _ in range(cfg.levels)]
        for pm in pose_maps:
            cmap = correlate(pm, stack, store, cfg)
            for k, lvl in enumerate(pyramid.levels):
                resized = interp_correlation(cmap, lvl.layout[1:])
                ref_tokens[k].append(select_topk(resized, lvl, cfg.gamma))
    return decode_views(pose_maps, ref_tokens, store, cfg)


def l2_image_loss(pred: Var, targets: np.ndarray) -> Var:
    targets = np.asarray(targets, dtype=np.float64)
    if pred.value.shape != targets.shape:
        raise ContractError(
            f"prediction shape {pred.value.shape} vs targets {targets.shape}"
        )
    diff = sub(pred, Var(targets))
    return scale(sum_all(mul(diff, diff)), 1.0 / targets.size)


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    steps: int = 0


def train_i2mv(
    samples: list,
    pcfa_cfg: PcfaConfig,
    train_cfg: I2mvTrainConfig,
    seed: int,
    store: ParamStore | None = None,
) -> tuple:
    """SGD training over synthetic identities; returns (store, result).

    Each step draws one identity and a random reference subset sized
    uniformly in [refs_min, refs_max]. Deterministic given the seed.
    """
    if not samples:
        raise ContractError("training needs at least one identity")
    if store is None:
        store = init_i2mv_params(pcfa_cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([0x7261B, seed]))
    opt = SgdMomentum(train_cfg.lr, train_cfg.momentum, train_cfg.warmup)
    result = TrainResult()
    for step in range(train_cfg.steps):
        sample = samples[rng.integers(len(samples))]
        hi = min(train_cfg.refs_max, sample.n_refs)
        lo = min(train_cfg.refs_min, hi)
        n = int(rng.integers(lo, hi + 1))
        pick = rng.choice(sample.n_refs, size=n, replace=False)
        refs = sample.ref_rgb[pick]
        masks = sample.ref_mask[pick]
        pose = np.asarray(sample.ortho_normal, dtype=np.float64)
        if train_cfg.target == "rgb":
            targets = np.asarray(sample.ortho_rgb, dtype=np.float64)
        else:
            targets = pose
        pred = i2mv_forward(store, pcfa_cfg, refs, masks, pose)
        loss = l2_image_loss(pred, targets)
        if not np.isfinite(loss.value):
            raise ContractError(f"non-finite training loss at step {step}")
        store.zero_grad()
        backward(loss)
        opt.step(store)
        result.losses.append(float(loss.value))
        result.steps += 1
    return store, result


def smoothed_curve(losses, window: int = 25) -> np.ndarray:
    """Trailing-mean smoothing used by the monotonicity checks."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ContractError("empty loss curve")
    out = np.empty_like(losses)
    for i in range(losses.size):
        out[i] = losses[max(0, i - window + 1): i + 1].mean()
    return out

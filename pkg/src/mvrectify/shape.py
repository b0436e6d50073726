"""Multi-reference shape regressor.

Ten learnable query tokens cross-attend to the stacked reference
tokens through a fixed-depth perceiver stack; a per-token layer norm
plus linear head reads out one coefficient per query, clamped to the
synthesis range. Queries never see reference order, so predictions are
permutation-invariant over references.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bodymodel import BETA_LIMIT, N_SHAPE_COEFFS, BlendShapeModel
from .errors import ContractError
from .layers import (
    add_attention_params,
    add_layer_norm_params,
    add_patch_embed,
    attention_params_from,
    embed_patches,
)
from .numerics import (
    Var,
    abs_,
    add,
    attention_var,
    backward,
    clamp,
    layer_norm,
    matmul,
    relu,
    reshape,
    scale,
    sub,
    sum_all,
)
from .params import ParamStore, SgdMomentum


@dataclass(frozen=True)
class ShapeConfig:
    resolution: int = 32
    patch_size: int = 8
    d_enc: int = 64
    query_dim: int = 1024
    n_queries: int = N_SHAPE_COEFFS
    depth: int = 6
    attn_width: int = 64
    ff_hidden: int = 256
    heads: int = 1
    channels: int = 3

    def __post_init__(self):
        for name in ("resolution", "patch_size", "d_enc", "query_dim", "n_queries",
                     "depth", "attn_width", "ff_hidden", "heads", "channels"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if self.resolution % self.patch_size:
            raise ContractError(
                f"resolution {self.resolution} not divisible by patch {self.patch_size}"
            )
        if self.attn_width % self.heads:
            raise ContractError(
                f"attn_width {self.attn_width} not divisible by heads {self.heads}"
            )

    @property
    def tokens_per_ref(self) -> int:
        g = self.resolution // self.patch_size
        return g * g


def init_shape_params(cfg: ShapeConfig, seed: int) -> ParamStore:
    rng = np.random.default_rng(np.random.SeedSequence([0x5A9E, seed]))
    store = ParamStore()
    add_patch_embed(store, rng, "enc", cfg.patch_size, cfg.channels, cfg.d_enc,
                    cfg.tokens_per_ref)
    store.add("tau", rng.normal(0.0, 0.02, (cfg.n_queries, cfg.query_dim)))
    for i in range(cfg.depth):
        add_layer_norm_params(store, f"layer{i}.ln_attn", cfg.query_dim)
        add_attention_params(
            store, rng, f"layer{i}.cross", cfg.query_dim, cfg.heads,
            d_kv=cfg.d_enc, width=cfg.attn_width, d_out=cfg.query_dim, out_scale=0.5,
        )
        add_layer_norm_params(store, f"layer{i}.ln_ff", cfg.query_dim)
        store.add(f"layer{i}.w_ff1",
                  rng.normal(0.0, 1.0 / np.sqrt(cfg.query_dim), (cfg.query_dim, cfg.ff_hidden)))
        store.add(f"layer{i}.b_ff1", np.zeros(cfg.ff_hidden))
        store.add(f"layer{i}.w_ff2",
                  rng.normal(0.0, 0.5 / np.sqrt(cfg.ff_hidden), (cfg.ff_hidden, cfg.query_dim)))
        store.add(f"layer{i}.b_ff2", np.zeros(cfg.query_dim))
    add_layer_norm_params(store, "head.ln", cfg.query_dim)
    store.add("head.w", rng.normal(0.0, 0.02, (cfg.query_dim, 1)))
    store.add("head.b", np.zeros(1))
    return store


def predict_shape_var(
    store: ParamStore, cfg: ShapeConfig, ref_images: np.ndarray,
) -> Var:
    """Forward pass to a (n_queries,) coefficient variable."""
    ref_images = np.asarray(ref_images, dtype=np.float64)
    if ref_images.ndim == 3:
        ref_images = ref_images[None]
    if ref_images.shape[0] < 1:
        raise ContractError("shape prediction needs at least one reference")
    if ref_images.shape[1:] != (cfg.resolution, cfg.resolution, cfg.channels):
        raise ContractError(
            f"reference shape {ref_images.shape[1:]} does not match config "
            f"{(cfg.resolution, cfg.resolution, cfg.channels)}"
        )
    tokens = embed_patches(store, "enc", ref_images, cfg.patch_size)
    x = store.get("tau")
    for i in range(cfg.depth):
        normed = layer_norm(x, store.get(f"layer{i}.ln_attn.gain"),
                            store.get(f"layer{i}.ln_attn.bias"))
        x = add(x, attention_var(normed, tokens, tokens,
                                 attention_params_from(store, f"layer{i}.cross", cfg.heads)))
        normed = layer_norm(x, store.get(f"layer{i}.ln_ff.gain"),
                            store.get(f"layer{i}.ln_ff.bias"))
        h = relu(add(matmul(normed, store.get(f"layer{i}.w_ff1")),
                     store.get(f"layer{i}.b_ff1")))
        x = add(x, add(matmul(h, store.get(f"layer{i}.w_ff2")),
                       store.get(f"layer{i}.b_ff2")))
    x = layer_norm(x, store.get("head.ln.gain"), store.get("head.ln.bias"))
    out = add(matmul(x, store.get("head.w")), store.get("head.b"))
    return clamp(reshape(out, (cfg.n_queries,)), -BETA_LIMIT, BETA_LIMIT)


def predict_shape(store: ParamStore, cfg: ShapeConfig, ref_images: np.ndarray) -> np.ndarray:
    return predict_shape_var(store, cfg, ref_images).value.copy()


def vertex_loss_var(beta_pred, beta_gt: np.ndarray, model: BlendShapeModel) -> Var:
    """Mean over vertices of the L1 norm of canonical-pose offsets (meters)."""
    if not isinstance(beta_pred, Var):
        beta_pred = Var(np.asarray(beta_pred, dtype=np.float64))
    beta_gt = np.asarray(beta_gt, dtype=np.float64)
    n_v = model.template.shape[0]
    basis = Var(model.basis_matrix())
    pred_flat = matmul(reshape(beta_pred, (1, beta_gt.size)), basis)
    gt_flat = (model.basis_matrix().T @ beta_gt).reshape(1, -1)
    return scale(sum_all(abs_(sub(pred_flat, Var(gt_flat)))), 1.0 / n_v)


def vertex_loss(beta_pred: np.ndarray, beta_gt: np.ndarray, model: BlendShapeModel) -> float:
    return float(vertex_loss_var(beta_pred, beta_gt, model).value)


@dataclass
class ShapeTrainConfig:
    steps: int = 1500
    lr: float = 0.02
    momentum: float = 0.9
    warmup: int = 50
    refs_min: int = 3
    refs_max: int = 8
    eval_every: int = 250

    def __post_init__(self):
        if self.steps < 1:
            raise ContractError(f"steps must be positive, got {self.steps}")
        if not 1 <= self.refs_min <= self.refs_max:
            raise ContractError(
                f"need 1 <= refs_min <= refs_max, got {self.refs_min}, {self.refs_max}"
            )


@dataclass
class ShapeTrainResult:
    losses: list = field(default_factory=list)
    v2v_curve: list = field(default_factory=list)  # (step, v2v_mm) pairs


def eval_v2v(store, cfg, model, samples, n_refs: int) -> float:
    from .metrics import v2v_mm

    vals = [
        v2v_mm(predict_shape(store, cfg, np.asarray(s.ref_rgb)[:n_refs]), s.beta, model)
        for s in samples
    ]
    return float(np.mean(vals))


def train_shape(
    samples: list,
    model: BlendShapeModel,
    cfg: ShapeConfig,
    train_cfg: ShapeTrainConfig,
    seed: int,
    val_samples: list | None = None,
    store: ParamStore | None = None,
) -> tuple:
    """SGD over identities with the vertex loss; returns (store, result)."""
    if not samples:
        raise ContractError("training needs at least one identity")
    if store is None:
        store = init_shape_params(cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([0x5A9E7, seed]))
    opt = SgdMomentum(train_cfg.lr, train_cfg.momentum, train_cfg.warmup)
    result = ShapeTrainResult()
    for step in range(train_cfg.steps):
        sample = samples[rng.integers(len(samples))]
        hi = min(train_cfg.refs_max, sample.n_refs)
        lo = min(train_cfg.refs_min, hi)
        n = int(rng.integers(lo, hi + 1))
        pick = rng.choice(sample.n_refs, size=n, replace=False)
        pred = predict_shape_var(store, cfg, np.asarray(sample.ref_rgb)[pick])
        loss = vertex_loss_var(pred, sample.beta, model)
        if not np.isfinite(loss.value):
            raise ContractError(f"non-finite training loss at step {step}")
        store.zero_grad()
        backward(loss)
        opt.step(store)
        result.losses.append(float(loss.value))
        if (step + 1) % train_cfg.eval_every == 0 or step + 1 == train_cfg.steps:
            probe = val_samples if val_samples else samples
            result.v2v_curve.append(
                (step + 1, eval_v2v(store, cfg, model, probe, train_cfg.refs_max))
            )
    return store, result

"""Scaled dot-product attention and the three-branch view block.

attention() and parallel_block() are the array-in/array-out entry points
with contract validation; the *_var flavors build graph nodes and are
shared by every trainable module in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, DimensionError, LayoutError
from . import autodiff as ad
from .autodiff import Var, as_var


def _check_finite(name: str, value: np.ndarray):
    if not np.isfinite(value).all():
        raise ContractError(f"{name} produced non-finite values")


def matmul_checked(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Plain matrix product with shape and finiteness validation."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a @ b
    _check_finite("matmul", out)
    return out


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction. Rows sum to 1 within 1e-9."""
    x = np.asarray(x, dtype=np.float64)
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    out = e / e.sum(axis=-1, keepdims=True)
    _check_finite("softmax_rows", out)
    return out


@dataclass
class AttentionParams:
    """Projections for one attention branch.

    Each matrix is (source_width, heads * d_head); the output projection
    is applied transposed. w_q and w_k must share their output width, and
    sqrt of the per-head slice of that width is the score scale. The
    query source and key/value source may differ in width, which is what
    cross-attention with narrow keys uses.
    """

    w_q: object
    w_k: object
    w_v: object
    w_o: object
    heads: int = 1

    def __post_init__(self):
        if self.heads < 1:
            raise ContractError(f"heads must be positive, got {self.heads}")
        shapes = {}
        for name in ("w_q", "w_k", "w_v", "w_o"):
            w = getattr(self, name)
            arr = w.value if isinstance(w, Var) else np.asarray(w)
            if arr.ndim != 2:
                raise DimensionError(f"{name} must be 2-d, got shape {arr.shape}")
            shapes[name] = arr.shape
        if shapes["w_k"][0] != shapes["w_v"][0]:
            raise DimensionError(
                f"w_k and w_v must read the same source: {shapes['w_k']} vs {shapes['w_v']}"
            )
        if shapes["w_q"][1] != shapes["w_k"][1]:
            raise DimensionError(
                f"w_q and w_k must share output width: {shapes['w_q']} vs {shapes['w_k']}"
            )
        if shapes["w_v"][1] != shapes["w_o"][1]:
            raise DimensionError(
                f"w_v and w_o must share output width: {shapes['w_v']} vs {shapes['w_o']}"
            )
        for name in ("w_q", "w_v"):
            if shapes[name][1] % self.heads:
                raise DimensionError(
                    f"{name} output width {shapes[name][1]} not divisible by heads={self.heads}"
                )

    @property
    def d_model(self) -> int:
        w = self.w_q
        return (w.value if isinstance(w, Var) else w).shape[0]


def init_attention_params(rng: np.random.Generator, d_model: int, heads: int = 1,
                          d_head: int | None = None, gain: float = 1.0) -> AttentionParams:
    if d_head is None:
        d_head = d_model // heads
    width = heads * d_head
    std = gain / np.sqrt(d_model)
    mats = [rng.normal(0.0, std, size=(d_model, width)) for _ in range(4)]
    return AttentionParams(*mats, heads=heads)


def attention_var(q, k, v, params: AttentionParams) -> Var:
    """Graph-building attention: softmax(qWq (kWk)^T / sqrt(dh)) (vWv) Wo^T."""
    q, k, v = as_var(q), as_var(k), as_var(v)
    if q.value.ndim != 2 or k.value.ndim != 2 or v.value.ndim != 2:
        raise DimensionError(
            f"attention expects 2-d token matrices, got {q.shape}, {k.shape}, {v.shape}"
        )
    if k.value.shape[0] != v.value.shape[0]:
        raise DimensionError(
            f"key and value token counts disagree: {k.shape} vs {v.shape}"
        )
    heads = params.heads
    qh = ad.matmul(q, as_var(params.w_q))
    kh = ad.matmul(k, as_var(params.w_k))
    vh = ad.matmul(v, as_var(params.w_v))
    d_head = qh.value.shape[1] // heads
    dv_head = vh.value.shape[1] // heads
    outs = []
    for h in range(heads):
        qs = ad.slice_cols(qh, h * d_head, (h + 1) * d_head)
        ks = ad.slice_cols(kh, h * d_head, (h + 1) * d_head)
        vs = ad.slice_cols(vh, h * dv_head, (h + 1) * dv_head)
        scores = ad.scale(ad.matmul_bt(qs, ks), 1.0 / np.sqrt(d_head))
        outs.append(ad.matmul(ad.softmax_rows_var(scores), vs))
    mixed = outs[0] if heads == 1 else ad.concat(outs, axis=1)
    return ad.matmul_bt(mixed, as_var(params.w_o))


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, params: AttentionParams) -> np.ndarray:
    """Array entry point for one attention pass."""
    out = attention_var(np.asarray(q, dtype=np.float64),
                        np.asarray(k, dtype=np.float64),
                        np.asarray(v, dtype=np.float64), params).value
    _check_finite("attention", out)
    return out


def _per_view_ref_tokens(ref_tokens, n_views: int):
    if isinstance(ref_tokens, (list, tuple)):
        if len(ref_tokens) != n_views:
            raise LayoutError(
                f"got {len(ref_tokens)} reference token sets for {n_views} views"
            )
        return [as_var(r) for r in ref_tokens]
    shared = as_var(ref_tokens)
    return [shared] * n_views


def parallel_block_var(f_in, ref_tokens, layout, params: dict) -> Var:
    """Sum of per-view self-attention, cross-view row attention, reference
    cross-attention, and the identity path.

    layout is (views, rows, cols); f_in rows are ordered view-major, then
    row-major inside each view. ref_tokens is one token matrix shared by
    all views or a sequence of per-view matrices.
    """
    f = as_var(f_in)
    m, h, w = layout
    t = m * h * w
    if f.value.ndim != 2 or f.value.shape[0] != t:
        raise LayoutError(
            f"token buffer {f.value.shape} does not match layout {layout} "
            f"(expected {t} rows)"
        )
    refs = _per_view_ref_tokens(ref_tokens, m)

    views = [ad.slice_rows(f, i * h * w, (i + 1) * h * w) for i in range(m)]
    self_out = ad.concat([attention_var(v_, v_, v_, params["self"]) for v_ in views], axis=0)

    row_pieces = []
    for r in range(h):
        idx = np.array(
            [vi * h * w + r * w + c for vi in range(m) for c in range(w)], dtype=np.int64
        )
        grp = ad.gather_rows(f, idx)
        row_pieces.append(attention_var(grp, grp, grp, params["mv"]))
    stacked = ad.concat(row_pieces, axis=0)
    # piece order is (row, view, col); map each token back to its slot
    perm = np.empty(t, dtype=np.int64)
    for vi in range(m):
        for r in range(h):
            for c in range(w):
                perm[vi * h * w + r * w + c] = r * (m * w) + vi * w + c
    mv_out = ad.gather_rows(stacked, perm)

    ref_out = ad.concat(
        [attention_var(views[i], refs[i], refs[i], params["ref"]) for i in range(m)], axis=0
    )

    return ad.add(ad.add(ad.add(self_out, mv_out), ref_out), f)


def parallel_block(f_in: np.ndarray, ref_tokens, layout, params: dict) -> np.ndarray:
    """Array entry point for one view block pass."""
    out = parallel_block_var(np.asarray(f_in, dtype=np.float64), ref_tokens, layout, params).value
    _check_finite("parallel_block", out)
    return out

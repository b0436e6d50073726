"""Constant resampling matrices for token grids.

Pooling and bilinear interpolation both become (dst, src) matrices so
they can run through the tape as ordinary matmuls with exact adjoints.
All builders are cached on their integer arguments.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ContractError


@lru_cache(maxsize=None)
def avgpool_matrix(h: int, w: int, kernel: int) -> np.ndarray:
    """Same-padding box filter, count-normalized at borders.

    Row (r*w + c) averages the in-bounds kernel x kernel window centered
    on (r, c); stride 1, so dst == src == (h*w,).
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ContractError(f"pool kernel must be odd and positive, got {kernel}")
    half = kernel // 2
    mat = np.zeros((h * w, h * w))
    for r in range(h):
        r0, r1 = max(0, r - half), min(h, r + half + 1)
        for c in range(w):
            c0, c1 = max(0, c - half), min(w, c + half + 1)
            count = (r1 - r0) * (c1 - c0)
            for rr in range(r0, r1):
                for cc in range(c0, c1):
                    mat[r * w + c, rr * w + cc] = 1.0 / count
    return mat


@lru_cache(maxsize=None)
def pool2_matrix(h: int, w: int) -> np.ndarray:
    """2x2 average pooling, stride 2: (h/2 * w/2, h*w)."""
    if h % 2 or w % 2:
        raise ContractError(f"grid {h}x{w} not divisible by 2 for pooling")
    dh, dw = h // 2, w // 2
    mat = np.zeros((dh * dw, h * w))
    for r in range(dh):
        for c in range(dw):
            for dr in (0, 1):
                for dc in (0, 1):
                    mat[r * dw + c, (2 * r + dr) * w + (2 * c + dc)] = 0.25
    return mat


@lru_cache(maxsize=None)
def bilinear_matrix(src_h: int, src_w: int, dst_h: int, dst_w: int) -> np.ndarray:
    """Bilinear resize as a (dst_h*dst_w, src_h*src_w) matrix.

    Samples at pixel centers with edge clamping, so constants map to
    constants and weights stay nonnegative and sum to 1 per row.
    """
    if min(src_h, src_w, dst_h, dst_w) < 1:
        raise ContractError("grid sides must be positive")
    mat = np.zeros((dst_h * dst_w, src_h * src_w))
    for r in range(dst_h):
        sy = (r + 0.5) * src_h / dst_h - 0.5
        y0 = int(np.floor(sy))
        fy = sy - y0
        for c in range(dst_w):
            sx = (c + 0.5) * src_w / dst_w - 0.5
            x0 = int(np.floor(sx))
            fx = sx - x0
            for yy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
                yc = min(max(yy, 0), src_h - 1)
                for xx, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
                    xc = min(max(xx, 0), src_w - 1)
                    if wy * wx:
                        mat[r * dst_w + c, yc * src_w + xc] += wy * wx
    return mat


@lru_cache(maxsize=None)
def mean_over_refs_matrix(n_refs: int, tokens: int) -> np.ndarray:
    """Matrix averaging the same token slot across n_refs blocks."""
    mat = np.zeros((tokens, n_refs * tokens))
    for t in range(tokens):
        for i in range(n_refs):
            mat[t, i * tokens + t] = 1.0 / n_refs
    return mat

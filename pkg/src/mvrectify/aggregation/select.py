"""Top-scoring token selection with deterministic tie handling."""

from __future__ import annotations

import math

import numpy as np

from ..errors import LayoutError, SelectionError
from ..numerics import gather_rows, mul
from .types import CorrelationMap, RefFeatureStack, SelectedFeatures


def topk_count(gamma: float, tokens_per_ref: int) -> int:
    return math.ceil(gamma * tokens_per_ref)


def select_topk(
    cmap: CorrelationMap, feats: RefFeatureStack, gamma: float
) -> SelectedFeatures:
    """Keep the ceil(gamma * S_k) highest-scoring tokens of one level.

    Ties break toward the lower index; the surviving indices are then
    sorted ascending so spatial order is preserved. Values are the
    feature rows scaled by their own correlation, and gradients flow
    through both factors (the index choice itself is frozen).

    Raises SelectionError when the stack holds fewer tokens than
    requested; callers may duplicate references and retry, this op
    never pads silently.
    """
    if cmap.layout != feats.layout:
        raise LayoutError(
            f"correlation layout {cmap.layout} vs feature layout {feats.layout}"
        )
    n, h, w = feats.layout
    s_k = h * w
    count = topk_count(gamma, s_k)
    if n * s_k < count:
        raise SelectionError(n, s_k, count)
    values = cmap.flat
    # stable argsort on negated scores: equal scores keep ascending index order
    order = np.argsort(-values, kind="stable")[:count]
    idx = np.sort(order)
    picked = mul(gather_rows(feats.features, idx), gather_rows(cmap.values, idx))
    return SelectedFeatures(picked, idx, n, s_k)

"""Allocation accounting for the aggregation stage.

The instrument counts tape-array elements allocated while one target
view cross-attends to its reference tokens (all decoder blocks), which
is the stage whose footprint the selection mechanism bounds. Encoder
and correlation costs are excluded on purpose: they are shared by every
strategy and would only dilute the contrast being measured.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..layers import attention_params_from
from ..numerics import attention_var, count_allocations
from ..params import ParamStore
from .correlate import correlate, interp_correlation
from .decoder import STRATEGIES, ref_tokens_concat, ref_tokens_mean
from .encoder import encode_pose, encode_refs, multiscale_features
from .select import select_topk
from .types import PcfaConfig


@dataclass
class MemoryRow:
    strategy: str
    n_refs: int
    selected_tokens: int
    peak_elements: int

    def as_csv(self) -> str:
        return f"{self.strategy},{self.n_refs},{self.selected_tokens},{self.peak_elements}"


def _token_rows(entry) -> int:
    if hasattr(entry, "values"):
        entry = entry.values
    return entry.value.shape[0]


def measure_aggregation(
    store: ParamStore,
    cfg: PcfaConfig,
    ref_images: np.ndarray,
    ref_masks: np.ndarray | None,
    pose_map: np.ndarray,
    strategy: str,
) -> MemoryRow:
    """Token count and instrumented peak elements for one strategy."""
    if strategy not in STRATEGIES:
        raise ContractError(f"unknown strategy {strategy!r}, know {STRATEGIES}")
    stack = encode_refs(ref_images, ref_masks, store, cfg)
    pyramid = multiscale_features(stack, cfg)
    if strategy == "concat":
        per_level = ref_tokens_concat(pyramid)
    elif strategy == "mean":
        per_level = ref_tokens_mean(pyramid)
    else:
        cmap = correlate(pose_map, stack, store, cfg)
        per_level = [
            select_topk(interp_correlation(cmap, lvl.layout[1:]), lvl, cfg.gamma)
            for lvl in pyramid.levels
        ]
    pose_tokens = encode_pose(pose_map, store, cfg, "dec.pose")
    kv = [e.values if hasattr(e, "values") else e for e in per_level]
    with count_allocations() as counter:
        for k in range(cfg.levels):
            params = attention_params_from(store, f"dec.block{k}.ref", cfg.heads)
            attention_var(pose_tokens, kv[k], kv[k], params)
    selected = sum(_token_rows(e) for e in per_level)
    return MemoryRow(strategy, len(np.asarray(ref_images)), selected, counter["elements"])


def memory_report(
    store: ParamStore,
    cfg: PcfaConfig,
    ref_images: np.ndarray,
    ref_masks: np.ndarray | None,
    pose_map: np.ndarray,
    ref_counts=(3, 6, 9, 12),
    strategies=STRATEGIES,
) -> list:
    """Rows for every (strategy, N) pair, slicing the first N references."""
    ref_images = np.asarray(ref_images)
    rows = []
    for strategy in strategies:
        for n in ref_counts:
            if n > len(ref_images):
                raise ContractError(
                    f"need {n} references but only {len(ref_images)} supplied"
                )
            masks = None if ref_masks is None else np.asarray(ref_masks)[:n]
            rows.append(
                measure_aggregation(store, cfg, ref_images[:n], masks, pose_map, strategy)
            )
    return rows


def rows_to_csv(rows) -> str:
    lines = ["strategy,N,selected_tokens,peak_elements"]
    lines.extend(r.as_csv() for r in rows)
    return "\n".join(lines) + "\n"

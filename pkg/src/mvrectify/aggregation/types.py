"""Containers and configuration for correlation-guided feature aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError, LayoutError
from ..numerics import Var


@dataclass(frozen=True)
class PcfaConfig:
    """Knobs for the aggregation pathway.

    gamma scales how many tokens selection keeps per pyramid level
    (count = ceil(gamma * tokens_at_level)); pool is the odd box-filter
    kernel smoothing correlation maps. The token grid must survive
    levels-1 rounds of 2x2 pooling.
    """

    resolution: int = 32
    patch_size: int = 8
    d_model: int = 64
    heads: int = 2
    transformer_depth: int = 2
    levels: int = 3
    gamma: float = 2.0
    pool: int = 3
    corr_width: int = 64
    channels: int = 3

    def __post_init__(self):
        for name in ("resolution", "patch_size", "d_model", "heads",
                     "transformer_depth", "levels", "corr_width", "channels"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gamma <= 0:
            raise ContractError(f"gamma must be positive, got {self.gamma}")
        if self.pool < 1 or self.pool % 2 == 0:
            raise ContractError(f"pool must be odd and positive, got {self.pool}")
        if self.resolution % self.patch_size:
            raise ContractError(
                f"resolution {self.resolution} not divisible by patch {self.patch_size}"
            )
        if self.d_model % self.heads:
            raise ContractError(
                f"d_model {self.d_model} not divisible by heads {self.heads}"
            )
        grid = self.resolution // self.patch_size
        if grid % (1 << (self.levels - 1)):
            raise ContractError(
                f"token grid {grid} cannot be pooled {self.levels - 1} times"
            )

    @property
    def grid(self) -> int:
        return self.resolution // self.patch_size

    @property
    def tokens_per_ref(self) -> int:
        return self.grid * self.grid

    @property
    def level_grids(self) -> list:
        return [(self.grid >> k, self.grid >> k) for k in range(self.levels)]

    def selected_count(self, level: int) -> int:
        gh, gw = self.level_grids[level]
        return math.ceil(self.gamma * gh * gw)


def _rows(x) -> int:
    return (x.value if isinstance(x, Var) else np.asarray(x)).shape[0]


@dataclass
class RefFeatureStack:
    """Stacked tokens from N reference images.

    features: (N*h*w, d) tape variable, reference-major; token_mask marks
    foreground tokens. Masked references must keep at least one
    foreground token each.
    """

    features: Var
    layout: tuple
    token_mask: np.ndarray | None = None

    def __post_init__(self):
        n, h, w = self.layout
        if n < 1 or h < 1 or w < 1:
            raise LayoutError(f"bad layout {self.layout}")
        if _rows(self.features) != n * h * w:
            raise LayoutError(
                f"features have {_rows(self.features)} rows, layout wants {n * h * w}"
            )
        if self.token_mask is not None:
            self.token_mask = np.asarray(self.token_mask, dtype=bool).reshape(-1)
            if self.token_mask.size != n * h * w:
                raise LayoutError(
                    f"token_mask has {self.token_mask.size} entries, expected {n * h * w}"
                )
            per_ref = self.token_mask.reshape(n, h * w)
            if not per_ref.any(axis=1).all():
                bad = int(np.flatnonzero(~per_ref.any(axis=1))[0])
                raise ContractError(
                    f"reference {bad} has no foreground tokens under its mask"
                )

    @property
    def n_refs(self) -> int:
        return self.layout[0]

    @property
    def tokens_per_ref(self) -> int:
        return self.layout[1] * self.layout[2]

    @property
    def width(self) -> int:
        return (self.features.value if isinstance(self.features, Var)
                else np.asarray(self.features)).shape[1]


@dataclass
class CorrelationMap:
    """Nonnegative per-token relevance, stored as an (N*h*w, 1) column."""

    values: Var
    layout: tuple

    def __post_init__(self):
        n, h, w = self.layout
        arr = self.values.value if isinstance(self.values, Var) else np.asarray(self.values)
        if arr.shape != (n * h * w, 1):
            raise LayoutError(
                f"correlation column has shape {arr.shape}, expected {(n * h * w, 1)}"
            )
        if arr.size and arr.min() < -1e-12:
            raise ContractError(f"correlation values must be nonnegative, min {arr.min()}")

    @property
    def flat(self) -> np.ndarray:
        arr = self.values.value if isinstance(self.values, Var) else np.asarray(self.values)
        return arr[:, 0]


@dataclass
class MultiScaleRefFeatures:
    """Feature pyramid: level 0 is the native token grid, later levels
    halve each side by 2x2 average pooling."""

    levels: list = field(default_factory=list)

    def __post_init__(self):
        if not self.levels:
            raise ContractError("feature pyramid needs at least one level")
        n = self.levels[0].n_refs
        prev = None
        for k, stack in enumerate(self.levels):
            if stack.n_refs != n:
                raise LayoutError(f"level {k} has {stack.n_refs} refs, level 0 has {n}")
            hw = stack.layout[1:]
            if prev is not None and not (hw[0] < prev[0] and hw[1] < prev[1]):
                raise LayoutError(f"level {k} grid {hw} does not shrink from {prev}")
            prev = hw

    @property
    def n_refs(self) -> int:
        return self.levels[0].n_refs


@dataclass
class SelectedFeatures:
    """Correlation-weighted rows picked from one pyramid level.

    indices strictly increase; their count is ceil(gamma * S_k), which is
    independent of how many references contributed.
    """

    values: Var
    indices: np.ndarray
    n_refs: int
    tokens_per_ref: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if self.indices.size > 1 and not (np.diff(self.indices) > 0).all():
            raise ContractError("selected indices must strictly increase")
        if _rows(self.values) != self.indices.size:
            raise DimensionError(
                f"{_rows(self.values)} value rows vs {self.indices.size} indices"
            )

    @property
    def count(self) -> int:
        return int(self.indices.size)

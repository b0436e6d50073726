"""Named parameter store and a plain SGD-with-momentum optimizer.

Parameters live as tape variables so a forward pass can consume them
directly; the optimizer mutates their ``value`` arrays in place between
steps, which keeps every reference inside composed modules valid.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .numerics import Var


class ParamStore:
    """Ordered mapping of parameter name to tape variable."""

    def __init__(self):
        self._params: dict[str, Var] = {}

    def add(self, name: str, value: np.ndarray) -> Var:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        v = Var(np.asarray(value, dtype=np.float64))
        self._params[name] = v
        return v

    def get(self, name: str) -> Var:
        try:
            return self._params[name]
        except KeyError:
            raise ContractError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_elements(self) -> int:
        return sum(v.value.size for v in self._params.values())

    def zero_grad(self) -> None:
        for v in self._params.values():
            v.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        """Copies of the current values, keyed by name."""
        return {k: v.value.copy() for k, v in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = [k for k in self._params if k not in arrays]
        extra = [k for k in arrays if k not in self._params]
        if missing or extra:
            raise ContractError(
                f"parameter set mismatch: missing {missing!r}, unexpected {extra!r}"
            )
        for k, v in self._params.items():
            arr = np.asarray(arrays[k], dtype=np.float64)
            if arr.shape != v.value.shape:
                raise ContractError(
                    f"parameter {k!r} has shape {arr.shape}, expected {v.value.shape}"
                )
            v.value = arr.copy()


class SgdMomentum:
    """SGD with classical momentum and linear learning-rate warm-up.

    The effective rate at step t (0-based) is lr * min(1, (t+1)/warmup);
    after warm-up it stays constant.
    """

    def __init__(self, lr: float, momentum: float = 0.9, warmup: int = 0):
        if lr <= 0:
            raise ContractError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ContractError(f"momentum must be in [0, 1), got {momentum}")
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.warmup = int(warmup)
        self.step_count = 0
        self._velocity: dict[str, np.ndarray] = {}

    def effective_lr(self) -> float:
        if self.warmup > 0 and self.step_count < self.warmup:
            return self.lr * (self.step_count + 1) / self.warmup
        return self.lr

    def step(self, store: ParamStore) -> None:
        lr = self.effective_lr()
        for name, v in store.items():
            g = v.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise ContractError(f"non-finite gradient for parameter {name!r}")
            vel = self._velocity.get(name)
            if vel is None:
                vel = np.zeros_like(v.value)
                self._velocity[name] = vel
            vel *= self.momentum
            vel -= lr * g
            v.value = v.value + vel
        self.step_count += 1

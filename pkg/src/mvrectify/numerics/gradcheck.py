"""Central-difference verification of hand-derived adjoints."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, ProbeError
from .autodiff import Var, backward


def grad_check(f, x: np.ndarray, eps: float = 1e-5) -> float:
    """Compare the tape gradient of a scalar map against central differences.

    f takes a Var and must return a scalar Var whose graph reaches it.
    Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
    Non-finite probe values raise ProbeError naming the coordinate.
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ContractError(f"probe step {eps} outside [1e-6, 1e-3]")
    x = np.asarray(x, dtype=np.float64)
    leaf = Var(x.copy())
    out = f(leaf)
    if not isinstance(out, Var) or out.value.ndim != 0:
        raise ContractError("grad_check target must return a scalar Var")
    if not np.isfinite(out.value):
        raise ProbeError(-1, "base point evaluated non-finite")
    backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x)

    flat = x.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        probe = flat.copy()
        probe[i] = flat[i] + eps
        hi = f(Var(probe.reshape(x.shape))).value
        probe[i] = flat[i] - eps
        lo = f(Var(probe.reshape(x.shape))).value
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise ProbeError(i)
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic.reshape(-1)[i]
        err = abs(a - numeric) / max(1.0, abs(a))
        if err > worst:
            worst = float(err)
    return worst

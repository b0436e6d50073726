"""Dense numerics: a small reverse-mode tape, attention, and grad checking.

The op set is deliberately closed (matmul, add, mul, softmax, relu,
normalize, gather plus shape plumbing); every adjoint is hand derived and
covered by finite-difference checks. Arrays are float64 in tests; the
same code paths run in float32 when callers pass float32 data.
"""

from .autodiff import (
    Var,
    add,
    backward,
    clamp,
    concat,
    count_allocations,
    gather_rows,
    layer_norm,
    matmul,
    matmul_bt,
    mean_axis0,
    mul,
    permute,
    relu,
    reshape,
    scale,
    slice_cols,
    slice_rows,
    softmax_rows_var,
    sub,
    sum_all,
    transpose,
    abs_,
)
from .attention import (
    AttentionParams,
    attention,
    attention_var,
    parallel_block,
    parallel_block_var,
    init_attention_params,
    matmul_checked,
    softmax_rows,
)
from .gradcheck import grad_check

__all__ = [
    "Var",
    "add",
    "backward",
    "clamp",
    "concat",
    "count_allocations",
    "gather_rows",
    "layer_norm",
    "matmul",
    "matmul_bt",
    "mean_axis0",
    "mul",
    "permute",
    "relu",
    "reshape",
    "scale",
    "slice_cols",
    "slice_rows",
    "softmax_rows_var",
    "sub",
    "sum_all",
    "transpose",
    "abs_",
    "AttentionParams",
    "attention",
    "attention_var",
    "parallel_block",
    "parallel_block_var",
    "init_attention_params",
    "matmul_checked",
    "softmax_rows",
    "grad_check",
]

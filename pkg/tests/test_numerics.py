"""Tape primitives against independent oracles and finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvrectify.errors import ContractError, DimensionError, ProbeError
from mvrectify.numerics import (
    AttentionParams,
    Var,
    attention,
    attention_var,
    backward,
    count_allocations,
    grad_check,
    init_attention_params,
    parallel_block,
    parallel_block_var,
    softmax_rows,
)
from mvrectify.numerics import autodiff as ad

GRAD_TOL = 1e-5


def loop_matmul(a, b):
    """Deliberately naive three-loop product, the matmul oracle."""
    n, k = a.shape
    k2, m = b.shape
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def test_matmul_matches_triple_loop(rng):
    a = rng.normal(size=(7, 5))
    b = rng.normal(size=(5, 4))
    got = ad.matmul(Var(a), Var(b)).value
    assert np.abs(got - loop_matmul(a, b)).max() < 1e-12


def test_matmul_bt_matches_transpose_product(rng):
    a = rng.normal(size=(6, 3))
    b = rng.normal(size=(8, 3))
    got = ad.matmul_bt(Var(a), Var(b)).value
    assert np.abs(got - a @ b.T).max() < 1e-13


def test_softmax_matches_longdouble_oracle(rng):
    x = rng.normal(scale=30.0, size=(11, 9))
    hi = np.exp(x.astype(np.longdouble))
    want = (hi / hi.sum(axis=-1, keepdims=True)).astype(np.float64)
    got = softmax_rows(x)
    assert np.abs(got - want).max() < 1e-12
    assert np.abs(got.sum(axis=-1) - 1.0).max() < 1e-12


def test_softmax_shift_invariance(rng):
    x = rng.normal(size=(4, 6))
    assert np.abs(softmax_rows(x) - softmax_rows(x + 1000.0)).max() < 1e-12


def test_softmax_huge_inputs_stay_finite():
    out = softmax_rows(np.array([[1e9, 1e9 - 1.0, 0.0]]))
    assert np.isfinite(out).all()


def dense_attention_oracle(q, k, v, p):
    """Single-pass einsum re-derivation, structured unlike the library."""
    heads = p.heads
    qh = np.asarray(q) @ p.w_q
    kh = np.asarray(k) @ p.w_k
    vh = np.asarray(v) @ p.w_v
    dh = qh.shape[1] // heads
    dv = vh.shape[1] // heads
    pieces = []
    for h in range(heads):
        s = np.einsum("id,jd->ij", qh[:, h * dh:(h + 1) * dh],
                      kh[:, h * dh:(h + 1) * dh]) / np.sqrt(dh)
        e = np.exp(s - s.max(axis=1, keepdims=True))
        w = e / e.sum(axis=1, keepdims=True)
        pieces.append(w @ vh[:, h * dv:(h + 1) * dv])
    return np.concatenate(pieces, axis=1) @ np.asarray(p.w_o).T


def test_attention_matches_dense_oracle(rng):
    p = init_attention_params(rng, d_model=12, heads=3)
    q = rng.normal(size=(5, 12))
    k = rng.normal(size=(9, 12))
    v = rng.normal(size=(9, 12))
    assert np.abs(attention(q, k, v, p) - dense_attention_oracle(q, k, v, p)).max() < 1e-12


def test_attention_rejects_mismatched_kv(rng):
    p = init_attention_params(rng, d_model=4)
    with pytest.raises(DimensionError):
        attention(np.zeros((2, 4)), np.zeros((3, 4)), np.zeros((5, 4)), p)


def test_attention_params_validate_widths(rng):
    with pytest.raises(DimensionError):
        AttentionParams(
            w_q=rng.normal(size=(4, 6)), w_k=rng.normal(size=(4, 8)),
            w_v=rng.normal(size=(4, 8)), w_o=rng.normal(size=(4, 8)),
        )


# --- gradients ------------------------------------------------------------


def _scalar(v):
    return ad.sum_all(ad.mul(v, v))


@pytest.mark.parametrize("op,shape", [
    ("matmul", (4, 3)),
    ("matmul_bt", (4, 3)),
    ("transpose", (4, 3)),
    ("reshape", (4, 3)),
    ("permute", (2, 3, 4)),
    ("softmax", (5, 4)),
    ("relu", (4, 5)),
    ("abs", (4, 5)),
    ("layer_norm", (4, 6)),
    ("gather", (6, 3)),
    ("concat", (4, 3)),
    ("slices", (6, 8)),
    ("mean_axis0", (5, 4)),
    ("clamp", (4, 5)),
])
def test_primitive_gradients(op, shape, rng):
    x0 = rng.normal(size=shape)
    other = rng.normal(size=(shape[-1], shape[-1]))
    same_shape = rng.normal(size=shape)
    if op in ("relu", "abs"):
        # keep probes away from the kink at zero
        x0 = np.where(np.abs(x0) < 0.1, x0 + 0.3, x0)
    if op == "clamp":
        x0 = np.clip(x0, -0.8, 0.8) * 0.9

    def f(v):
        if op == "matmul":
            return _scalar(ad.matmul(v, Var(other)))
        if op == "matmul_bt":
            return _scalar(ad.matmul_bt(v, Var(same_shape)))
        if op == "transpose":
            return _scalar(ad.transpose(v))
        if op == "reshape":
            return _scalar(ad.reshape(v, (shape[0] * shape[1],)))
        if op == "permute":
            return _scalar(ad.reshape(ad.permute(v, (2, 0, 1)), (-1, shape[0])))
        if op == "softmax":
            return _scalar(ad.softmax_rows_var(v))
        if op == "relu":
            return _scalar(ad.relu(v))
        if op == "abs":
            return ad.sum_all(ad.abs_(v))
        if op == "layer_norm":
            return _scalar(ad.layer_norm(v, Var(np.ones(shape[1])), Var(np.zeros(shape[1]))))
        if op == "gather":
            return _scalar(ad.gather_rows(v, np.array([0, 2, 2, 5])))
        if op == "concat":
            return _scalar(ad.concat([v, ad.scale(v, 2.0)], axis=0))
        if op == "slices":
            return _scalar(ad.slice_cols(ad.slice_rows(v, 1, 5), 2, 7))
        if op == "mean_axis0":
            return _scalar(ad.mean_axis0(v))
        if op == "clamp":
            return ad.sum_all(ad.clamp(v, -1.0, 1.0))
        raise AssertionError(op)

    assert grad_check(f, x0) < GRAD_TOL


def test_attention_gradient(rng):
    p = init_attention_params(rng, d_model=6, heads=2)
    k = rng.normal(size=(7, 6))

    def f(v):
        return _scalar(attention_var(v, Var(k), Var(k), p))

    assert grad_check(f, rng.normal(size=(4, 6))) < GRAD_TOL


def test_attention_gradient_through_keys(rng):
    p = init_attention_params(rng, d_model=6, heads=1)
    q = rng.normal(size=(3, 6))

    def f(v):
        return _scalar(attention_var(Var(q), v, v, p))

    assert grad_check(f, rng.normal(size=(5, 6))) < GRAD_TOL


def _block_params(rng, d):
    return {
        "self": init_attention_params(rng, d),
        "mv": init_attention_params(rng, d),
        "ref": init_attention_params(rng, d),
    }


def test_parallel_block_gradient(rng):
    d = 6
    layout = (2, 2, 3)
    params = _block_params(rng, d)
    refs = rng.normal(size=(5, d))

    def f(v):
        return _scalar(parallel_block_var(v, Var(refs), layout, params))

    assert grad_check(f, rng.normal(size=(2 * 2 * 3, d)), eps=1e-5) < 1e-4


def test_parallel_block_row_attention_is_row_isolated(rng):
    """The cross-view branch must never mix tokens from different rows."""
    d = 4
    m, h, w = 2, 3, 2
    params = _block_params(rng, d)
    # silence the self/ref branches so only the row branch remains
    for name in ("self", "ref"):
        p = params[name]
        params[name] = AttentionParams(p.w_q, p.w_k, np.zeros_like(np.asarray(p.w_v)),
                                       np.zeros_like(np.asarray(p.w_o)), heads=p.heads)
    f0 = rng.normal(size=(m * h * w, d))
    refs = rng.normal(size=(3, d))
    base = parallel_block(f0, refs, (m, h, w), params)
    bumped = f0.copy()
    bumped[0 * h * w + 2 * w + 1] += 1.5  # view 0, row 2, col 1
    out = parallel_block(bumped, refs, (m, h, w), params)
    delta = np.abs(out - base - (bumped - f0))  # identity path carries the bump
    rows = np.array([(i // w) % h for i in range(m * h * w)])
    assert delta[rows != 2].max() < 1e-12
    assert delta[rows == 2].max() > 1e-3


def test_parallel_block_rejects_bad_layout(rng):
    params = _block_params(rng, 4)
    with pytest.raises(ContractError):
        parallel_block(rng.normal(size=(10, 4)), rng.normal(size=(3, 4)), (2, 2, 3), params)


# --- tape mechanics -------------------------------------------------------


def test_backward_accumulates_through_reuse(rng):
    x = Var(rng.normal(size=(3, 3)))
    y = ad.add(ad.mul(x, x), ad.scale(x, 2.0))
    backward(ad.sum_all(y))
    assert np.abs(x.grad - (2.0 * x.value + 2.0)).max() < 1e-12


def test_broadcast_add_unbroadcasts_gradient(rng):
    a = Var(rng.normal(size=(4, 3)))
    b = Var(rng.normal(size=(1, 3)))
    backward(ad.sum_all(ad.add(a, b)))
    assert a.grad.shape == (4, 3)
    assert b.grad.shape == (1, 3)
    assert np.abs(b.grad - 4.0).max() < 1e-12


def test_gradcheck_rejects_nonscalar(rng):
    with pytest.raises(ContractError):
        grad_check(lambda v: v, rng.normal(size=(2, 2)))


def test_gradcheck_flags_wrong_adjoint():
    def bad(v):
        # correct value, fabricated gradient
        out = Var(np.asarray((v.value ** 2).sum()), parents=(v,),
                  bwd=lambda g: [np.ones_like(v.value)])
        return out

    assert grad_check(bad, np.array([1.0, 2.0])) > 1e-2


def test_count_allocations_tracks_tape_arrays(rng):
    with count_allocations() as counter:
        a = Var(rng.normal(size=(10, 10)))
        b = ad.matmul(a, a)
    assert counter["elements"] >= b.value.size


# --- property-based checks ------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(
    rows=st.integers(min_value=1, max_value=6),
    cols=st.integers(min_value=1, max_value=6),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_softmax_rows_always_normalized(rows, cols, seed):
    x = np.random.default_rng(seed).normal(scale=15.0, size=(rows, cols))
    out = softmax_rows(x)
    assert np.all(out > 0.0)
    assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=5),
    k=st.integers(min_value=1, max_value=5),
    m=st.integers(min_value=1, max_value=5),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_matmul_gradients_any_shape(n, k, m, seed):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(k, m))

    def f(v):
        return ad.sum_all(ad.matmul(v, Var(b)))

    assert grad_check(f, rng.normal(size=(n, k))) < GRAD_TOL


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_attention_permuting_keys_keeps_output(seed):
    """Key/value rows form a set: any permutation leaves attention fixed."""
    rng = np.random.default_rng(seed)
    p = init_attention_params(rng, d_model=5)
    q = rng.normal(size=(3, 5))
    k = rng.normal(size=(6, 5))
    perm = rng.permutation(6)
    assert np.abs(attention(q, k, k, p) - attention(q, k[perm], k[perm], p)).max() < 1e-10

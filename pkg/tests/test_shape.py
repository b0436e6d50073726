"""Shape regressor: invariances, the vertex loss, and a training smoke."""

import numpy as np
import pytest

from mvrectify.bodymodel import BETA_LIMIT
from mvrectify.errors import ContractError
from mvrectify.numerics import Var
from mvrectify.shape import (
    ShapeConfig,
    ShapeTrainConfig,
    eval_v2v,
    init_shape_params,
    predict_shape,
    predict_shape_var,
    train_shape,
    vertex_loss,
    vertex_loss_var,
)


TINY = ShapeConfig(resolution=32, patch_size=8, d_enc=16, query_dim=32,
                   depth=1, attn_width=16, ff_hidden=32, heads=1)


def test_config_rejects_bad_grid():
    with pytest.raises(ContractError):
        ShapeConfig(resolution=30, patch_size=8)
    with pytest.raises(ContractError):
        ShapeConfig(attn_width=30, heads=4)


def test_init_deterministic():
    a = init_shape_params(TINY, seed=5)
    b = init_shape_params(TINY, seed=5)
    for name in a.names():
        assert (a.get(name).value == b.get(name).value).all()


def test_prediction_shape_and_clamp(tiny_sample):
    store = init_shape_params(TINY, seed=0)
    beta = predict_shape(store, TINY, tiny_sample.ref_rgb)
    assert beta.shape == (TINY.n_queries,)
    assert (np.abs(beta) <= BETA_LIMIT).all()


def test_prediction_permutation_invariant(tiny_sample, rng):
    store = init_shape_params(TINY, seed=0)
    base = predict_shape(store, TINY, tiny_sample.ref_rgb)
    for _ in range(3):
        perm = rng.permutation(tiny_sample.n_refs)
        shuffled = predict_shape(store, TINY, tiny_sample.ref_rgb[perm])
        assert np.abs(base - shuffled).max() < 1e-6


def test_prediction_rejects_bad_inputs():
    store = init_shape_params(TINY, seed=0)
    with pytest.raises(ContractError):
        predict_shape(store, TINY, np.zeros((0, 32, 32, 3)))
    with pytest.raises(ContractError):
        predict_shape(store, TINY, np.zeros((2, 16, 16, 3)))


def test_single_reference_accepted(tiny_sample):
    store = init_shape_params(TINY, seed=0)
    beta = predict_shape(store, TINY, tiny_sample.ref_rgb[0])
    assert np.isfinite(beta).all()


# --- vertex loss ---------------------------------------------------------------


def test_vertex_loss_zero_at_truth(body_model, rng):
    beta = rng.normal(size=body_model.n_shapes)
    assert vertex_loss(beta, beta, body_model) == 0.0


def test_vertex_loss_matches_direct_oracle(body_model, rng):
    a = rng.normal(size=body_model.n_shapes)
    b = rng.normal(size=body_model.n_shapes)
    offsets = (body_model.basis_matrix().T @ (a - b)).reshape(-1, 3)
    want = np.abs(offsets).sum(axis=1).mean()
    assert abs(vertex_loss(a, b, body_model) - want) < 1e-12


def test_vertex_loss_symmetric_and_triangle(body_model, rng):
    a, b, c = (rng.normal(size=body_model.n_shapes) for _ in range(3))
    ab = vertex_loss(a, b, body_model)
    assert abs(ab - vertex_loss(b, a, body_model)) < 1e-12
    assert vertex_loss(a, c, body_model) <= ab + vertex_loss(b, c, body_model) + 1e-12


def test_vertex_loss_gradient_direction(body_model):
    # nudging the prediction toward the target must lower the loss
    gt = np.zeros(body_model.n_shapes)
    pred = Var(np.full(body_model.n_shapes, 0.5))
    loss = vertex_loss_var(pred, gt, body_model)
    from mvrectify.numerics import backward

    backward(loss)
    assert (pred.grad > 0).all()  # positive offsets pull loss up


# --- training -------------------------------------------------------------------


def test_short_overfit_descends(body_model, tiny_sample):
    tcfg = ShapeTrainConfig(steps=60, lr=0.005, momentum=0.9, warmup=10,
                            refs_min=4, refs_max=6, eval_every=30)
    store, res = train_shape([tiny_sample], body_model, TINY, tcfg, seed=1)
    first = np.mean(res.losses[:10])
    last = np.mean(res.losses[-10:])
    assert last < first
    assert len(res.v2v_curve) == 2
    steps, v2v = zip(*res.v2v_curve)
    assert steps == (30, 60)


def test_training_deterministic(body_model, tiny_sample):
    tcfg = ShapeTrainConfig(steps=8, lr=0.005, momentum=0.9, warmup=2,
                            refs_min=3, refs_max=5, eval_every=8)
    _, r1 = train_shape([tiny_sample], body_model, TINY, tcfg, seed=4)
    _, r2 = train_shape([tiny_sample], body_model, TINY, tcfg, seed=4)
    assert r1.losses == r2.losses


def test_training_continues_from_store(body_model, tiny_sample):
    tcfg = ShapeTrainConfig(steps=5, lr=0.005, momentum=0.9, warmup=2,
                            refs_min=3, refs_max=3, eval_every=5)
    store, _ = train_shape([tiny_sample], body_model, TINY, tcfg, seed=4)
    before = predict_shape(store, TINY, tiny_sample.ref_rgb)
    store2, _ = train_shape([tiny_sample], body_model, TINY, tcfg, seed=5, store=store)
    assert store2 is store  # continuation trains in place
    after = predict_shape(store, TINY, tiny_sample.ref_rgb)
    assert np.abs(after - before).max() > 0.0


def test_eval_v2v_slices_references(body_model, tiny_sample):
    store = init_shape_params(TINY, seed=0)
    v_all = eval_v2v(store, TINY, body_model, [tiny_sample], tiny_sample.n_refs)
    v_three = eval_v2v(store, TINY, body_model, [tiny_sample], 3)
    assert np.isfinite(v_all) and np.isfinite(v_three)


def test_training_needs_samples(body_model):
    tcfg = ShapeTrainConfig(steps=1, lr=0.01, momentum=0.9, warmup=1,
                            refs_min=1, refs_max=1, eval_every=1)
    with pytest.raises(ContractError):
        train_shape([], body_model, TINY, tcfg, seed=0)

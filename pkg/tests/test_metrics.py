"""Geometry, image, and report metrics against closed-form oracles."""

import numpy as np
import pytest

from mvrectify.bodymodel.mesh import TriMesh, icosphere
from mvrectify.errors import ContractError
from mvrectify.metrics import (
    MetricReport,
    aggregate_reports,
    chamfer_cm,
    directed_surface_distances,
    normal_l2,
    p2s_cm,
    psnr,
    sample_surface,
    ssim,
    v2v_meshes_mm,
    v2v_mm,
)


@pytest.fixture(scope="module")
def sphere():
    v, f = icosphere(3)
    return TriMesh(0.5 * v, f)


# --- sampling ----------------------------------------------------------------


def test_surface_samples_lie_on_unit_sphere():
    v, f = icosphere(4)
    pts = sample_surface(TriMesh(v, f), 2000, seed=0)
    r = np.linalg.norm(pts, axis=1)
    # barycentric points sit on faces, slightly inside the circumsphere
    assert r.max() <= 1.0 + 1e-12
    assert r.min() > 0.99


def test_surface_sampling_deterministic(sphere):
    a = sample_surface(sphere, 500, seed=3)
    b = sample_surface(sphere, 500, seed=3)
    c = sample_surface(sphere, 500, seed=4)
    assert (a == b).all()
    assert (a != c).any()


def test_sample_surface_rejects_empty(sphere):
    with pytest.raises(ContractError):
        sample_surface(sphere, 0, seed=0)


# --- chamfer / p2s ------------------------------------------------------------


def test_chamfer_self_is_zero(sphere):
    assert abs(chamfer_cm(sphere, sphere, n_samples=20_000, seed=0)) < 1e-9


def test_chamfer_concentric_spheres_is_one_cm(sphere):
    outer = TriMesh(sphere.vertices * (0.51 / 0.5), sphere.faces)
    d = chamfer_cm(sphere, outer, n_samples=40_000, seed=0)
    assert abs(d - 1.0) < 0.05


def test_chamfer_symmetric_in_arguments(sphere):
    # each direction draws its own samples, so symmetry holds statistically
    outer = TriMesh(sphere.vertices * 1.1, sphere.faces)
    ab = chamfer_cm(sphere, outer, 5000, seed=2)
    ba = chamfer_cm(outer, sphere, 5000, seed=2)
    assert abs(ab - ba) / ab < 0.02


def test_directed_distance_translation_oracle(sphere):
    # moving a sphere 3 radii away: every sample is at least one diameter out
    far = TriMesh(sphere.vertices + np.array([1.5, 0.0, 0.0]), sphere.faces)
    d = directed_surface_distances(sphere, far, 2000, seed=0)
    assert d.min() > 0.45  # gap between the two surfaces
    assert d.max() < 2.55


def test_p2s_one_sided(sphere):
    dented = TriMesh(sphere.vertices * 0.98, sphere.faces)
    a = p2s_cm(sphere, dented, 10_000, seed=1)
    assert 0.9 < a < 1.05  # 2% of the 0.5 m radius is 1 cm


def test_chamfer_deterministic(sphere):
    outer = TriMesh(sphere.vertices * 1.02, sphere.faces)
    assert chamfer_cm(sphere, outer, 3000, 5) == chamfer_cm(sphere, outer, 3000, 5)
    assert chamfer_cm(sphere, outer, 3000, 5) != chamfer_cm(sphere, outer, 3000, 6)


# --- v2v ------------------------------------------------------------------------


def test_v2v_meshes_closed_form(sphere):
    moved = TriMesh(sphere.vertices + np.array([0.003, 0.0, 0.0]), sphere.faces)
    assert abs(v2v_meshes_mm(sphere, moved) - 3.0) < 1e-9


def test_v2v_meshes_rejects_topology_mismatch(sphere):
    with pytest.raises(ContractError):
        small_v, small_f = icosphere(2)
        v2v_meshes_mm(sphere, TriMesh(0.5 * small_v, small_f))


def test_v2v_beta_is_a_metric(body_model, rng):
    a = rng.normal(size=body_model.n_shapes)
    b = rng.normal(size=body_model.n_shapes)
    c = rng.normal(size=body_model.n_shapes)
    assert v2v_mm(a, a, body_model) == 0.0
    assert abs(v2v_mm(a, b, body_model) - v2v_mm(b, a, body_model)) < 1e-9
    assert v2v_mm(a, c, body_model) <= v2v_mm(a, b, body_model) + v2v_mm(b, c, body_model) + 1e-9


def test_v2v_beta_scales_linearly(body_model):
    beta = np.zeros(body_model.n_shapes)
    beta[0] = 1.0
    one = v2v_mm(beta, np.zeros_like(beta), body_model)
    two = v2v_mm(2.0 * beta, np.zeros_like(beta), body_model)
    assert abs(two - 2.0 * one) < 1e-9


def test_v2v_beta_vertex_oracle(body_model, rng):
    a = rng.normal(size=body_model.n_shapes)
    b = rng.normal(size=body_model.n_shapes)
    offsets = (body_model.basis_matrix().T @ (a - b)).reshape(-1, 3)
    want = 1000.0 * np.linalg.norm(offsets, axis=1).mean()
    assert abs(v2v_mm(a, b, body_model) - want) < 1e-9


# --- image metrics ----------------------------------------------------------------


def test_psnr_twenty_db_oracle():
    a = np.full((16, 16, 3), 0.2)
    b = np.full((16, 16, 3), 0.3)
    assert abs(psnr(a, b) - 20.0) < 1e-9


def test_psnr_identical_is_infinite():
    img = np.random.default_rng(0).uniform(size=(12, 12))
    assert psnr(img, img) == float("inf")


def test_psnr_monotone_in_noise(rng):
    img = rng.uniform(0.2, 0.8, size=(24, 24, 3))
    values = []
    for amp in (0.01, 0.02, 0.05, 0.1, 0.2):
        noisy = np.clip(img + rng.normal(0.0, amp, img.shape), 0.0, 1.0)
        values.append(psnr(img, noisy))
    assert all(x > y for x, y in zip(values, values[1:]))


def test_psnr_rejects_mismatched_shapes():
    with pytest.raises(ContractError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))
    with pytest.raises(ContractError):
        psnr(np.zeros((2, 4, 4, 3)), np.zeros((2, 4, 4, 3)))


def test_ssim_identical_is_one(rng):
    img = rng.uniform(size=(16, 16, 3))
    assert ssim(img, img) == 1.0


def test_ssim_decreases_with_noise(rng):
    img = rng.uniform(0.2, 0.8, size=(32, 32))
    mild = np.clip(img + rng.normal(0.0, 0.02, img.shape), 0, 1)
    harsh = np.clip(img + rng.normal(0.0, 0.2, img.shape), 0, 1)
    assert 1.0 > ssim(img, mild) > ssim(img, harsh)


def test_ssim_rejects_tiny_images():
    with pytest.raises(ContractError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


# --- rendered normal error -----------------------------------------------------------


def test_normal_l2_self_is_zero(sphere):
    assert normal_l2(sphere, sphere, resolution=48) == 0.0


def test_normal_l2_positive_for_different_shapes(sphere):
    squashed = TriMesh(sphere.vertices * np.array([1.3, 1.0, 0.7]), sphere.faces)
    v = normal_l2(sphere, squashed, resolution=48)
    assert v > 1e-4


def test_normal_l2_grows_with_deformation(sphere):
    mild = TriMesh(sphere.vertices * np.array([1.05, 1.0, 1.0]), sphere.faces)
    harsh = TriMesh(sphere.vertices * np.array([1.5, 1.0, 1.0]), sphere.faces)
    assert normal_l2(sphere, harsh, resolution=48) > normal_l2(sphere, mild, resolution=48)


# --- reports --------------------------------------------------------------------------


def test_aggregate_matches_manual_mean():
    reports = [
        MetricReport(case_id="a", chamfer_cm=1.0, psnr_db=30.0),
        MetricReport(case_id="b", chamfer_cm=2.0, psnr_db=34.0),
        MetricReport(case_id="c", chamfer_cm=4.0, psnr_db=38.0),
    ]
    agg = aggregate_reports(reports)
    assert agg["n_cases"] == 3
    assert abs(agg["chamfer_cm"] - np.mean([1.0, 2.0, 4.0])) < 1e-12
    assert abs(agg["psnr_db"] - 34.0) < 1e-12


def test_aggregate_skips_missing_metrics():
    reports = [
        MetricReport(case_id="a", chamfer_cm=1.0, v2v_mm=5.0),
        MetricReport(case_id="b", chamfer_cm=3.0),
    ]
    agg = aggregate_reports(reports)
    assert agg["chamfer_cm"] == 2.0
    assert agg["v2v_mm"] == 5.0  # only one case carried it
    assert agg["ssim"] is None

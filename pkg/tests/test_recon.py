"""Normal-driven carving and color projection."""

import numpy as np
import pytest

from mvrectify.bodymodel.cameras import OrthoCamera
from mvrectify.bodymodel.mesh import TriMesh, icosphere
from mvrectify.errors import ContractError, ProjectionError
from mvrectify.metrics import chamfer_cm, normal_l2
from mvrectify.recon.carve import (
    CarveConfig,
    affine_scale_stage,
    carve,
    freeze_targets,
    normal_energy,
    normal_energy_grad,
    render_normal_targets,
)
from mvrectify.recon.texture import blend_region, feather_weights, project_colors


def sphere_mesh(subdiv=2, scale=1.0):
    v, f = icosphere(subdiv)
    return TriMesh(0.5 * scale * np.atleast_2d(v), f)


def ring_cameras(n=6, resolution=64, half_extent=1.0):
    return [OrthoCamera(360.0 * k / n, half_extent, resolution)
            for k in range(n)]


# --- frozen normal energy ----------------------------------------------------


def test_energy_zero_against_own_render():
    mesh = sphere_mesh()
    cams = ring_cameras(4)
    maps, masks = render_normal_targets(mesh, cams)
    frozen = freeze_targets(mesh, maps, masks, cams)
    e = normal_energy(mesh.vertices, mesh.faces, frozen)
    # every pixel contributes |n|^2 - 2 n.n + |n|^2, zero up to cancellation
    assert abs(e) < 1e-9


def test_energy_positive_for_mismatched_target():
    mesh = sphere_mesh()
    target = TriMesh(mesh.vertices * np.array([1.2, 1.0, 1.0]), mesh.faces)
    cams = ring_cameras(4)
    maps, masks = render_normal_targets(target, cams)
    frozen = freeze_targets(mesh, maps, masks, cams)
    assert normal_energy(mesh.vertices, mesh.faces, frozen) > 1.0


def test_energy_gradient_matches_central_differences(rng):
    mesh = sphere_mesh(subdiv=1)
    target = TriMesh(mesh.vertices * np.array([1.15, 1.0, 0.9]), mesh.faces)
    cams = ring_cameras(3, resolution=32)
    maps, masks = render_normal_targets(target, cams)
    frozen = freeze_targets(mesh, maps, masks, cams)
    val, grad = normal_energy_grad(mesh.vertices, mesh.faces, frozen)
    assert abs(val - normal_energy(mesh.vertices, mesh.faces, frozen)) < 1e-12
    h = 1e-6
    for _ in range(12):
        vi = int(rng.integers(mesh.vertices.shape[0]))
        ax = int(rng.integers(3))
        vp = mesh.vertices.copy()
        vm = mesh.vertices.copy()
        vp[vi, ax] += h
        vm[vi, ax] -= h
        fd = (normal_energy(vp, mesh.faces, frozen)
              - normal_energy(vm, mesh.faces, frozen)) / (2.0 * h)
        ref = max(abs(fd), abs(grad[vi, ax]), 1e-8)
        assert abs(fd - grad[vi, ax]) / ref < 1e-4, (vi, ax)


# --- alignment stage -----------------------------------------------------------


def test_affine_stage_recovers_global_scale():
    mesh = sphere_mesh(subdiv=3)
    target = TriMesh(mesh.vertices * np.array([1.3, 1.0, 1.0]), mesh.faces)
    cams = ring_cameras(6, resolution=96)
    maps, masks = render_normal_targets(target, cams)
    scaled, moves, e_start, e_end = affine_scale_stage(
        mesh.vertices, mesh.faces, maps, masks, cams
    )
    assert moves > 0
    assert e_end < e_start
    factor = scaled[:, 0].max() / mesh.vertices[:, 0].max()
    assert abs(factor - 1.3) < 0.05
    # untouched axes stay within a couple percent
    assert abs(scaled[:, 1].max() / mesh.vertices[:, 1].max() - 1.0) < 0.03


# --- carving ---------------------------------------------------------------------


def test_carve_fixed_point_stays_put():
    mesh = sphere_mesh(subdiv=2)
    cams = ring_cameras(4, resolution=64)
    maps, masks = render_normal_targets(mesh, cams)
    cfg = CarveConfig(outer_iters=2, inner_steps=5, step_size=1e-4, affine_align=False)
    carved, rounds = carve(mesh, maps, masks, cams, cfg)
    moved = np.linalg.norm(carved.vertices - mesh.vertices, axis=1).max()
    assert moved < 1e-6  # zero gradient at the optimum, nothing to do
    assert all(r.loss_end <= r.loss_start + 1e-18 for r in rounds)


def test_carve_step_losses_monotone_per_round():
    mesh = sphere_mesh(subdiv=2)
    target = TriMesh(mesh.vertices * np.array([1.25, 1.0, 0.85]), mesh.faces)
    cams = ring_cameras(6, resolution=64)
    maps, masks = render_normal_targets(target, cams)
    cfg = CarveConfig(outer_iters=3, inner_steps=10, step_size=1e-4, affine_align=False)
    carved, rounds = carve(mesh, maps, masks, cams, cfg)
    for r in rounds:
        trace = r.step_losses
        assert all(b <= a + 1e-18 for a, b in zip(trace, trace[1:])), r.round_index


def test_carve_toward_anisotropic_target_improves_everything():
    mesh = sphere_mesh(subdiv=2)
    target = TriMesh(mesh.vertices * np.array([1.3, 1.0, 1.0]), mesh.faces)
    cams = ring_cameras(6, resolution=64)
    maps, masks = render_normal_targets(target, cams)
    cfg = CarveConfig(outer_iters=4, inner_steps=20, step_size=1e-4)
    carved, rounds = carve(mesh, maps, masks, cams, cfg)
    assert chamfer_cm(carved, target, 20_000, 0) < chamfer_cm(mesh, target, 20_000, 0) / 3
    assert normal_l2(carved, target, resolution=64) < normal_l2(mesh, target, resolution=64) / 3


def test_carve_smooths_toward_bumpy_target(rng):
    mesh = sphere_mesh(subdiv=2)
    radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    bumpy = TriMesh(mesh.vertices + 0.03 * np.sin(7.0 * mesh.vertices[:, [1]]) * radial,
                    mesh.faces)
    cams = ring_cameras(6, resolution=64)
    maps, masks = render_normal_targets(bumpy, cams)
    cfg = CarveConfig(outer_iters=4, inner_steps=20, step_size=1e-4, affine_align=False)
    carved, _ = carve(mesh, maps, masks, cams, cfg)
    assert normal_l2(carved, bumpy, resolution=64) < normal_l2(mesh, bumpy, resolution=64)


def test_carve_preserves_topology_and_colors():
    mesh = sphere_mesh(subdiv=1)
    colors = np.tile([0.2, 0.4, 0.6], (mesh.vertices.shape[0], 1))
    mesh = TriMesh(mesh.vertices, mesh.faces, vertex_colors=colors)
    cams = ring_cameras(3, resolution=32)
    maps, masks = render_normal_targets(mesh, cams)
    cfg = CarveConfig(outer_iters=1, inner_steps=2, step_size=1e-5, affine_align=False)
    carved, _ = carve(mesh, maps, masks, cams, cfg)
    assert (carved.faces == mesh.faces).all()
    assert (carved.vertex_colors == colors).all()


def test_carve_config_validation():
    with pytest.raises(ContractError):
        CarveConfig(outer_iters=0)
    with pytest.raises(ContractError):
        CarveConfig(step_size=0.0)
    with pytest.raises(ContractError):
        CarveConfig(solver="adam")
    with pytest.raises(ContractError):
        CarveConfig(lambda_laplacian=-1.0)


# --- color projection ------------------------------------------------------------


def test_project_constant_color_everywhere():
    mesh = sphere_mesh(subdiv=2)
    cams = ring_cameras(6, resolution=64)
    img = np.tile([0.3, 0.5, 0.7], (64, 64, 1))
    painted = project_colors(mesh, [img] * 6, cams)
    assert np.abs(painted.vertex_colors - [0.3, 0.5, 0.7]).max() < 1e-9


def test_project_single_view_fills_far_side_by_bfs():
    mesh = sphere_mesh(subdiv=2)
    cam = OrthoCamera(0.0, 1.0, 64)
    img = np.tile([0.9, 0.1, 0.1], (64, 64, 1))
    painted = project_colors(mesh, [img], [cam])
    # only the near hemisphere is seen, the rest inherits by traversal
    assert np.abs(painted.vertex_colors - [0.9, 0.1, 0.1]).max() < 1e-9


def test_project_two_views_split_hemispheres():
    mesh = sphere_mesh(subdiv=3)
    front = OrthoCamera(0.0, 1.0, 64)          # looks down -z, sees +z side
    back = OrthoCamera(180.0, 1.0, 64)
    red = np.tile([1.0, 0.0, 0.0], (64, 64, 1))
    blue = np.tile([0.0, 0.0, 1.0], (64, 64, 1))
    painted = project_colors(mesh, [red, blue], [front, back])
    z = mesh.vertices[:, 2]
    front_side = painted.vertex_colors[z > 0.2]
    back_side = painted.vertex_colors[z < -0.2]
    assert (front_side[:, 0] > front_side[:, 2]).mean() > 0.99
    assert (back_side[:, 2] > back_side[:, 0]).mean() > 0.99


def test_project_rejects_mismatched_views():
    mesh = sphere_mesh(subdiv=1)
    cams = ring_cameras(2, resolution=32)
    img = np.zeros((32, 32, 3))
    with pytest.raises(ContractError):
        project_colors(mesh, [img], cams)


@pytest.mark.filterwarnings("ignore:mesh extends outside")
def test_project_raises_when_nothing_visible():
    mesh = sphere_mesh(subdiv=1)
    # camera window far away from the body
    cam = OrthoCamera(0.0, 0.05, 16)
    far = TriMesh(mesh.vertices + np.array([10.0, 0.0, 0.0]), mesh.faces)
    with pytest.raises(ProjectionError):
        project_colors(far, [np.zeros((16, 16, 3))], [cam])


# --- region blending --------------------------------------------------------------


def test_blend_all_or_nothing():
    carved = sphere_mesh(subdiv=1)
    init = TriMesh(carved.vertices * 1.2, carved.faces)
    n_v = carved.vertices.shape[0]
    keep_none = blend_region(carved, init, np.zeros(n_v, dtype=bool))
    assert (keep_none.vertices == carved.vertices).all()
    keep_all = blend_region(carved, init, np.ones(n_v, dtype=bool))
    assert (keep_all.vertices == init.vertices).all()


def test_blend_binary_mask_is_idempotent():
    carved = sphere_mesh(subdiv=1)
    init = TriMesh(carved.vertices * 1.1, carved.faces)
    mask = carved.vertices[:, 1] > 0.1
    once = blend_region(carved, init, mask, feather=0)
    twice = blend_region(once, init, mask, feather=0)
    assert (once.vertices == twice.vertices).all()


def test_feather_weights_decay_with_hops():
    mesh = sphere_mesh(subdiv=2)
    mask = mesh.vertices[:, 1] > 0.3
    w = feather_weights(mesh, mask, feather=2)
    assert (w[mask] == 1.0).all()
    assert ((w >= 0.0) & (w <= 1.0)).all()
    assert (w == 0.0).any()  # far vertices untouched
    levels = np.unique(np.round(w, 9))
    assert len(levels) == 4  # 0, 1/3, 2/3, 1 for feather 2


def test_blend_rejects_topology_mismatch():
    a = sphere_mesh(subdiv=1)
    b = sphere_mesh(subdiv=2)
    with pytest.raises(ContractError):
        blend_region(a, b, np.zeros(a.vertices.shape[0], dtype=bool))

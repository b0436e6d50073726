"""Blend-shape model, cameras, rasterization, file formats, synthesis."""

import numpy as np
import pytest

from mvrectify.bodymodel import io as bio
from mvrectify.bodymodel.blendshape import (
    BETA_LIMIT,
    ShapeParams,
    N_SHAPE_COEFFS,
    build_default_model,
    mesh_from_shape,
)
from mvrectify.bodymodel.cameras import ORTHO_AZIMUTHS, OrthoCamera, PerspCamera
from mvrectify.bodymodel.mesh import TriMesh, icosphere
from mvrectify.bodymodel.raster import (
    raster_correspondence,
    rasterize_colors,
    rasterize_normals,
)
from mvrectify.bodymodel.synth import load_identity, save_identity, synthesize_identity
from mvrectify.errors import ConfigurationError, ContractError


# --- blend shapes -----------------------------------------------------------


def test_zero_beta_reproduces_posed_template(body_model):
    mesh = mesh_from_shape(body_model, np.zeros(N_SHAPE_COEFFS), preset="T-pose")
    assert np.abs(mesh.vertices - body_model.template).max() < 1e-12


def test_blend_displacements_are_linear(body_model, rng):
    b1 = rng.uniform(-2, 2, N_SHAPE_COEFFS)
    b2 = rng.uniform(-2, 2, N_SHAPE_COEFFS)
    v0 = mesh_from_shape(body_model, np.zeros(N_SHAPE_COEFFS)).vertices
    v1 = mesh_from_shape(body_model, b1).vertices
    v2 = mesh_from_shape(body_model, b2).vertices
    v12 = mesh_from_shape(body_model, b1 + b2).vertices
    assert np.abs((v1 - v0) + (v2 - v0) - (v12 - v0)).max() < 1e-12


def test_unit_coefficient_moves_rms_amount(body_model):
    """One unit of any coefficient displaces vertices by ~the configured rms."""
    base = mesh_from_shape(body_model, np.zeros(N_SHAPE_COEFFS)).vertices
    for j in range(N_SHAPE_COEFFS):
        beta = np.zeros(N_SHAPE_COEFFS)
        beta[j] = 1.0
        moved = mesh_from_shape(body_model, beta).vertices
        rms = np.sqrt(np.mean(np.sum((moved - base) ** 2, axis=1)))
        assert abs(rms - 0.02) < 1e-9


def test_beta_validation(body_model):
    with pytest.raises(ContractError):
        mesh_from_shape(body_model, np.zeros(N_SHAPE_COEFFS + 1))
    with pytest.raises(ContractError):
        ShapeParams(np.zeros(N_SHAPE_COEFFS + 1))
    with pytest.raises(ConfigurationError):
        mesh_from_shape(body_model, np.zeros(N_SHAPE_COEFFS), preset="headstand")


def test_presets_are_pointwise_rotations(body_model):
    """Pose presets are per-vertex rotation fields: orthonormal, det +1."""
    for name, rots in body_model.presets.items():
        eye = np.einsum("vij,vkj->vik", rots, rots)
        assert np.abs(eye - np.eye(3)).max() < 1e-12, name
        assert np.abs(np.linalg.det(rots) - 1.0).max() < 1e-12, name


# --- meshes -----------------------------------------------------------------


def test_icosphere_is_unit_and_watertight():
    verts, faces = icosphere(2)
    assert np.abs(np.linalg.norm(verts, axis=1) - 1.0).max() < 1e-12
    # every edge shared by exactly two triangles
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert (counts == 2).all()


def test_face_normals_point_outward_on_sphere():
    verts, faces = icosphere(2)
    mesh = TriMesh(verts, faces)
    normals = mesh.face_normals()
    centers = verts[faces].mean(axis=1)
    dots = np.einsum("fd,fd->f", normals, centers / np.linalg.norm(centers, axis=1, keepdims=True))
    assert dots.min() > 0.9


def test_trimesh_rejects_bad_indices():
    with pytest.raises(ContractError):
        TriMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))


# --- cameras and rasterization ----------------------------------------------


def test_camera_rotations_are_orthonormal():
    for az in ORTHO_AZIMUTHS:
        rot = OrthoCamera(az).rotation()
        assert np.abs(rot @ rot.T - np.eye(3)).max() < 1e-12


def test_projection_center_and_corners():
    cam = OrthoCamera(0.0, half_extent=1.0, resolution=64)
    sx, sy, z = cam.project(np.array([[0.0, 0.0, 0.3], [-1.0, 1.0, 0.0]]))
    assert (sx[0], sy[0]) == (32.0, 32.0)
    assert (sx[1], sy[1]) == (0.0, 0.0)  # top-left corner
    assert z[0] == 0.3


def test_sphere_coverage_matches_area():
    verts, faces = icosphere(3)
    mesh = TriMesh(0.6 * verts, faces)
    cam = OrthoCamera(0.0, half_extent=1.0, resolution=128)
    _, mask = rasterize_normals(mesh, cam)
    pixel_area = (2.0 / 128) ** 2
    assert abs(mask.sum() * pixel_area - np.pi * 0.6 ** 2) < 0.02


def test_sphere_normals_are_radial():
    verts, faces = icosphere(4)
    mesh = TriMesh(0.6 * verts, faces)
    cam = OrthoCamera(0.0, half_extent=1.0, resolution=96)
    nmap, mask = rasterize_normals(mesh, cam)
    # center pixel looks straight at the camera: normal ~ +z in view space
    c = 48
    assert nmap[c, c] @ np.array([0.0, 0.0, 1.0]) > 0.995
    lengths = np.linalg.norm(nmap[mask], axis=1)
    assert np.abs(lengths - 1.0).max() < 1e-9


def test_azimuth_equals_rotating_the_mesh(body_model, rng):
    """Camera at azimuth a sees what the azimuth-0 camera sees of the
    mesh rotated by -a; view-space normal maps agree pixel for pixel."""
    beta = rng.uniform(-2, 2, N_SHAPE_COEFFS)
    mesh = mesh_from_shape(body_model, beta, preset="A-pose")
    az = 135.0
    cam = OrthoCamera(az, half_extent=1.0, resolution=64)
    n_direct, m_direct = rasterize_normals(mesh, cam)
    rot = cam.rotation()
    turned = TriMesh(mesh.vertices @ rot.T, mesh.faces.copy())
    n_rotated, m_rotated = rasterize_normals(turned, OrthoCamera(0.0, 1.0, 64))
    assert (m_direct == m_rotated).all()
    assert np.abs(n_direct - n_rotated).max() < 1e-9


def test_zbuffer_keeps_the_nearer_face():
    # two parallel quads; the one closer to the camera must win every pixel
    quad = np.array([[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    near = quad + [0.0, 0.0, 0.5]
    far = quad - [0.0, 0.0, 0.5]
    mesh = TriMesh(np.vstack([far, near]), np.vstack([faces, faces + 4]))
    r = raster_correspondence(mesh, OrthoCamera(0.0, 1.0, 32))
    assert r.face_index[r.mask].min() >= 2  # only the near quad's faces


def test_color_rasterization_interpolates(rng):
    verts, faces = icosphere(3)
    colors = rng.uniform(0.0, 1.0, size=(len(verts), 3))
    mesh = TriMesh(0.6 * verts, faces, vertex_colors=colors)
    img, mask = rasterize_colors(mesh, OrthoCamera(0.0, 1.0, 64))
    assert (img[~mask] == 0.0).all()
    assert img[mask].min() >= 0.0 and img[mask].max() <= 1.0


def test_perspective_camera_renders_reference_views(tiny_sample):
    assert tiny_sample.ref_rgb.shape == (6, 32, 32, 3)
    assert tiny_sample.ref_mask.any(axis=(1, 2)).all()  # every view sees the body


# --- file round trips ---------------------------------------------------------


def test_png_roundtrip_is_exact_at_8bit(tmp_path, rng):
    rgb = np.round(rng.uniform(size=(16, 16, 3)) * 255.0) / 255.0
    mask = rng.uniform(size=(16, 16)) > 0.4
    bio.save_png_rgba(tmp_path / "x.png", rgb, mask)
    rgb2, mask2 = bio.load_png_rgba(tmp_path / "x.png")
    assert np.abs(rgb2 - rgb).max() < 1e-12
    assert (mask2 == mask).all()


def test_normal_png_roundtrip(tmp_path):
    verts, faces = icosphere(3)
    nmap, mask = rasterize_normals(TriMesh(0.6 * verts, faces), OrthoCamera(0.0, 1.0, 32))
    bio.save_normal_png(tmp_path / "n.png", nmap, mask)
    nmap2, mask2 = bio.load_normal_png(tmp_path / "n.png")
    assert (mask2 == mask).all()
    assert np.abs(nmap2[mask] - nmap[mask]).max() < 2.0 / 255.0


def test_ply_roundtrip_preserves_geometry(tmp_path, rng):
    verts, faces = icosphere(2)
    colors = rng.uniform(size=(len(verts), 3))
    mesh = TriMesh(verts, faces, vertex_colors=colors)
    bio.save_ply(tmp_path / "m.ply", mesh)
    back = bio.load_ply(tmp_path / "m.ply")
    assert np.abs(back.vertices - verts).max() < 1e-6  # float32 storage
    assert (back.faces == faces).all()
    assert np.abs(back.vertex_colors - colors).max() < 1.0 / 255.0


def test_obj_export_writes_v_and_f_lines(tmp_path):
    verts, faces = icosphere(1)
    bio.save_obj(tmp_path / "m.obj", TriMesh(verts, faces))
    text = (tmp_path / "m.obj").read_text()
    assert text.count("\nf ") + text.startswith("f ") == len(faces)
    assert text.count("v ") == len(verts)


# --- synthesis ----------------------------------------------------------------


def test_synthesis_is_deterministic(body_model):
    a = synthesize_identity(7, body_model, n_refs=3, resolution=16)
    b = synthesize_identity(7, body_model, n_refs=3, resolution=16)
    assert (a.beta == b.beta).all()
    assert (a.ref_rgb == b.ref_rgb).all()
    assert (a.ortho_normal == b.ortho_normal).all()


def test_different_seeds_differ(body_model):
    a = synthesize_identity(7, body_model, n_refs=2, resolution=16)
    b = synthesize_identity(8, body_model, n_refs=2, resolution=16)
    assert not (a.beta == b.beta).all()


def test_occlusion_metadata_matches_masks(body_model):
    """Recorded visible fractions agree with actual mask pixel ratios."""
    sample = synthesize_identity(3, body_model, n_refs=8, resolution=32, occlusion_prob=1.0)
    occluded = 0
    for r, meta in enumerate(sample.ref_meta):
        occ = meta["occlusion"]
        if occ is None:
            continue
        occluded += 1
        visible = int(sample.ref_mask[r].sum())
        got = (occ["fg_before"] - visible) / occ["fg_before"]
        assert abs(got - occ["fraction"]) <= 0.01
    assert occluded == 8  # occlusion_prob=1 hides part of every reference


def test_identity_roundtrip_through_disk(tmp_path, body_model):
    sample = synthesize_identity(5, body_model, n_refs=3, resolution=16)
    save_identity(tmp_path / "case", sample)
    back = load_identity(tmp_path / "case")
    assert back.identity_id == sample.identity_id
    assert np.abs(back.beta - sample.beta).max() < 1e-12
    assert (back.ref_mask == sample.ref_mask).all()
    assert np.abs(back.ref_rgb - sample.ref_rgb).max() < 1.0 / 255.0
    assert np.abs(back.ortho_normal[back.ortho_mask]
                  - sample.ortho_normal[sample.ortho_mask]).max() < 2.0 / 255.0

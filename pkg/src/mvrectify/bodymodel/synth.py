"""Synthetic identity generation: shaped, textured, rendered, occluded.

Each identity is one shape-coefficient draw plus a procedural texture,
rendered into the six canonical orthographic views and a handful of
"unconstrained" perspective references with random framing and optional
rectangular occluders. Everything derives from one seed and is
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError
from . import io
from .blendshape import BETA_LIMIT, BlendShapeModel, mesh_from_shape
from .cameras import ORTHO_AZIMUTHS, OrthoCamera, PerspCamera
from .mesh import TriMesh
from .raster import rasterize_colors, rasterize_normals


@dataclass
class IdentitySample:
    identity_id: str
    beta: np.ndarray
    mesh: TriMesh
    pose_preset: str
    half_extent: float
    resolution: int
    ortho_azimuths: tuple
    ortho_rgb: np.ndarray
    ortho_normal: np.ndarray
    ortho_mask: np.ndarray
    ref_rgb: np.ndarray
    ref_mask: np.ndarray
    ref_meta: list = field(default_factory=list)

    @property
    def n_refs(self) -> int:
        return self.ref_rgb.shape[0]


def _procedural_colors(rng: np.random.Generator, unit_pos: np.ndarray) -> np.ndarray:
    """Banded three-color palette over the body surface, values in [0, 1]."""
    palette = rng.uniform(0.1, 0.95, size=(3, 3))
    band_freq = rng.uniform(2.0, 5.0)
    band_phase = rng.uniform(0.0, 2.0 * np.pi)
    sect_count = int(rng.integers(1, 4))
    sect_phase = rng.uniform(0.0, 2.0 * np.pi)
    y = unit_pos[:, 1]
    ang = np.arctan2(unit_pos[:, 2], unit_pos[:, 0])
    band = 0.5 * (1.0 + np.sin(band_freq * np.pi * y + band_phase))
    sect = 0.5 * (1.0 + np.sin(sect_count * ang + sect_phase))
    c = band[:, None] * palette[0] + (1.0 - band[:, None]) * palette[1]
    c = (0.55 + 0.45 * sect[:, None]) * c + (1.0 - sect[:, None]) * 0.35 * palette[2]
    return np.clip(c, 0.02, 0.98)


def _random_perspective_camera(rng: np.random.Generator, mesh: TriMesh, resolution: int) -> PerspCamera:
    az = rng.uniform(0.0, 2.0 * np.pi)
    el = np.deg2rad(rng.uniform(-12.0, 30.0))
    dist = rng.uniform(2.0, 3.6)
    pos = dist * np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])
    if rng.uniform() < 0.55:
        look = rng.normal(0.0, 0.08, size=3)
    else:
        # aim at a body point for a partial, crop-like framing
        look = mesh.vertices[rng.integers(0, len(mesh.vertices))] * rng.uniform(0.5, 0.95)
    fov = rng.uniform(22.0, 50.0)
    return PerspCamera(position=pos, look_at=look, fov_deg=fov, resolution=resolution)


def synthesize_identity(
    seed: int,
    model: BlendShapeModel,
    n_refs: int = 8,
    resolution: int = 32,
    pose_preset: str = "A-pose",
    half_extent: float = 1.0,
    occlusion_prob: float = 0.45,
) -> IdentitySample:
    """Draw one identity and render all of its views. Deterministic per seed."""
    if n_refs < 1:
        raise ContractError(f"n_refs must be positive, got {n_refs}")
    rng = np.random.default_rng(np.random.SeedSequence([0x1DE27, seed]))
    beta = np.clip(rng.standard_normal(model.n_shapes), -BETA_LIMIT, BETA_LIMIT)
    unit = model.template / np.linalg.norm(model.template, axis=1, keepdims=True)
    colors = _procedural_colors(rng, unit)
    mesh = mesh_from_shape(model, beta, preset=pose_preset, colors=colors)

    n_views = len(ORTHO_AZIMUTHS)
    ortho_rgb = np.zeros((n_views, resolution, resolution, 3))
    ortho_normal = np.zeros((n_views, resolution, resolution, 3))
    ortho_mask = np.zeros((n_views, resolution, resolution), dtype=bool)
    for i, az in enumerate(ORTHO_AZIMUTHS):
        cam = OrthoCamera(az, half_extent=half_extent, resolution=resolution)
        ortho_rgb[i], m = rasterize_colors(mesh, cam)
        ortho_normal[i], _ = rasterize_normals(mesh, cam)
        ortho_mask[i] = m

    ref_rgb = np.zeros((n_refs, resolution, resolution, 3))
    ref_mask = np.zeros((n_refs, resolution, resolution), dtype=bool)
    ref_meta = []
    for r in range(n_refs):
        cam = _random_perspective_camera(rng, mesh, resolution)
        rgb, m = rasterize_colors(mesh, cam)
        meta = {
            "camera": {
                "position": cam.position.tolist(),
                "look_at": cam.look_at.tolist(),
                "fov_deg": float(cam.fov_deg),
            },
            "occlusion": None,
        }
        if rng.uniform() < occlusion_prob:
            fg_before = int(m.sum())
            oh = int(rng.uniform(0.15, 0.4) * resolution)
            ow = int(rng.uniform(0.15, 0.4) * resolution)
            r0 = int(rng.integers(0, max(1, resolution - oh)))
            c0 = int(rng.integers(0, max(1, resolution - ow)))
            hidden = int(m[r0 : r0 + oh, c0 : c0 + ow].sum())
            rgb[r0 : r0 + oh, c0 : c0 + ow] = rng.uniform(0.1, 0.8, size=3)
            m[r0 : r0 + oh, c0 : c0 + ow] = False
            meta["occlusion"] = {
                "rect": [r0, c0, oh, ow],
                "fg_before": fg_before,
                "fraction": (hidden / fg_before) if fg_before else 0.0,
            }
        ref_rgb[r] = rgb
        ref_mask[r] = m
        ref_meta.append(meta)

    return IdentitySample(
        identity_id=f"id_{seed:05d}",
        beta=beta,
        mesh=mesh,
        pose_preset=pose_preset,
        half_extent=half_extent,
        resolution=resolution,
        ortho_azimuths=tuple(ORTHO_AZIMUTHS),
        ortho_rgb=ortho_rgb,
        ortho_normal=ortho_normal,
        ortho_mask=ortho_mask,
        ref_rgb=ref_rgb,
        ref_mask=ref_mask,
        ref_meta=ref_meta,
    )


def save_identity(directory, sample: IdentitySample):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    io.save_json(d / "beta.json", {"beta": sample.beta.tolist(), "pose": sample.pose_preset})
    io.save_ply(d / "mesh.ply", sample.mesh)
    for i, az in enumerate(sample.ortho_azimuths):
        tag = f"{int(round(az)):03d}"
        io.save_png_rgba(d / f"ortho_{tag}.png", sample.ortho_rgb[i], sample.ortho_mask[i])
        io.save_normal_png(d / f"ortho_{tag}_normal.png", sample.ortho_normal[i], sample.ortho_mask[i])
    for r in range(sample.n_refs):
        io.save_png_rgba(d / f"ref_{r:02d}.png", sample.ref_rgb[r], sample.ref_mask[r])
    io.save_json(
        d / "meta.json",
        {
            "identity_id": sample.identity_id,
            "pose": sample.pose_preset,
            "half_extent": sample.half_extent,
            "resolution": sample.resolution,
            "ortho_azimuths": list(sample.ortho_azimuths),
            "n_refs": sample.n_refs,
            "refs": sample.ref_meta,
        },
    )


def load_identity(directory) -> IdentitySample:
    d = Path(directory)
    meta = io.load_json(d / "meta.json")
    shape = io.load_json(d / "beta.json")
    mesh = io.load_ply(d / "mesh.ply")
    azs = meta["ortho_azimuths"]
    res = meta["resolution"]
    n_views = len(azs)
    ortho_rgb = np.zeros((n_views, res, res, 3))
    ortho_normal = np.zeros((n_views, res, res, 3))
    ortho_mask = np.zeros((n_views, res, res), dtype=bool)
    for i, az in enumerate(azs):
        tag = f"{int(round(az)):03d}"
        ortho_rgb[i], ortho_mask[i] = io.load_png_rgba(d / f"ortho_{tag}.png")
        ortho_normal[i], _ = io.load_normal_png(d / f"ortho_{tag}_normal.png")
    n_refs = meta["n_refs"]
    ref_rgb = np.zeros((n_refs, res, res, 3))
    ref_mask = np.zeros((n_refs, res, res), dtype=bool)
    for r in range(n_refs):
        ref_rgb[r], ref_mask[r] = io.load_png_rgba(d / f"ref_{r:02d}.png")
    return IdentitySample(
        identity_id=meta["identity_id"],
        beta=np.asarray(shape["beta"], dtype=np.float64),
        mesh=mesh,
        pose_preset=meta["pose"],
        half_extent=meta["half_extent"],
        resolution=res,
        ortho_azimuths=tuple(azs),
        ortho_rgb=ortho_rgb,
        ortho_normal=ortho_normal,
        ortho_mask=ortho_mask,
        ref_rgb=ref_rgb,
        ref_mask=ref_mask,
        ref_meta=meta["refs"],
    )

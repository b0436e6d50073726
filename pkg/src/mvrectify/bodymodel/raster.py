"""Mesh rasterization wrappers: correspondences, normal maps, color maps.

Flat shading only: a covered pixel carries its face's normal, which keeps
the carving gradient exact. Ties in depth break toward the lower face
index, so output never depends on face order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..accel import raster_screen
from ..errors import ContractError
from .cameras import OrthoCamera, PerspCamera
from .mesh import TriMesh


@dataclass
class RasterResult:
    face_index: np.ndarray      # (H, W) int32, -1 where empty
    bary: np.ndarray            # (H, W, 3)
    depth: np.ndarray           # (H, W) view-space z, -inf where empty
    rotation: np.ndarray        # (3, 3) world-to-view

    @property
    def mask(self) -> np.ndarray:
        return self.face_index >= 0


def raster_correspondence(mesh: TriMesh, camera) -> RasterResult:
    """Z-buffered pixel-to-face correspondences for either camera type."""
    if isinstance(camera, OrthoCamera):
        sx, sy, z = camera.project(mesh.vertices)
        faces = mesh.faces
        remap = None
        if not camera.fits(mesh.vertices):
            warnings.warn(
                "mesh extends outside the orthographic view rectangle; "
                "rendering the visible part",
                stacklevel=2,
            )
    elif isinstance(camera, PerspCamera):
        sx, sy, z, valid = camera.project(mesh.vertices)
        keep = valid[mesh.faces].all(axis=1)
        faces = mesh.faces[keep]
        remap = np.flatnonzero(keep).astype(np.int32)
    else:
        raise ContractError(f"unsupported camera type {type(camera).__name__}")

    res = camera.resolution
    fidx, bary, depth = raster_screen(sx, sy, z, faces, res, res)
    if remap is not None:
        covered = fidx >= 0
        fidx[covered] = remap[fidx[covered]]
    return RasterResult(fidx, bary, depth, camera.rotation())


def rasterize_normals(mesh: TriMesh, camera) -> tuple[np.ndarray, np.ndarray]:
    """View-space face normals per pixel, plus the coverage mask.

    Returns (normal_map (H, W, 3) float64 in [-1, 1], mask (H, W) bool).
    Background pixels are zero.
    """
    r = raster_correspondence(mesh, camera)
    fn_world = mesh.face_normals()
    fn_view = fn_world @ r.rotation.T
    out = np.zeros((*r.face_index.shape, 3))
    m = r.mask
    out[m] = fn_view[r.face_index[m]]
    return out, m


def rasterize_colors(mesh: TriMesh, camera) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric-interpolated vertex colors per pixel, plus the mask."""
    if mesh.vertex_colors is None:
        raise ContractError("mesh has no vertex colors to rasterize")
    r = raster_correspondence(mesh, camera)
    out = np.zeros((*r.face_index.shape, 3))
    m = r.mask
    tri_colors = mesh.vertex_colors[mesh.faces[r.face_index[m]]]  # (P, 3, 3)
    out[m] = np.einsum("pc,pcd->pd", r.bary[m], tri_colors)
    return np.clip(out, 0.0, 1.0), m

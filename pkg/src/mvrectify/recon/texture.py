"""Vertex color projection from posed views and region blending."""

from __future__ import annotations

from collections import deque

import numpy as np

from ..bodymodel import TriMesh
from ..bodymodel.raster import raster_correspondence
from ..errors import ContractError, ProjectionError

FACING_COS = np.cos(np.deg2rad(80.0))
DEPTH_TOL_SCALE = 1e-3


def _bilinear(image: np.ndarray, xs: np.ndarray, ys: np.ndarray,
              weight_map: np.ndarray | None):
    """Sample (H, W, 3) at continuous pixel coords; returns (rgb, weight).

    With a weight map, taps are weighted by it and renormalized, so
    samples straddling a foreground boundary ignore background texels.
    """
    h, w = image.shape[:2]
    x0 = np.floor(xs - 0.5).astype(np.int64)
    y0 = np.floor(ys - 0.5).astype(np.int64)
    fx = (xs - 0.5) - x0
    fy = (ys - 0.5) - y0
    rgb = np.zeros((xs.size, 3))
    total = np.zeros(xs.size)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = np.clip(x0 + dx, 0, w - 1)
            yi = np.clip(y0 + dy, 0, h - 1)
            tap = np.abs((1 - dx) - fx) * np.abs((1 - dy) - fy)
            if weight_map is not None:
                tap = tap * weight_map[yi, xi]
            rgb += tap[:, None] * image[yi, xi]
            total += tap
    ok = total > 1e-12
    rgb[ok] /= total[ok, None]
    return rgb, ok


def project_colors(
    mesh: TriMesh, images, cameras, masks=None
) -> TriMesh:
    """Paint vertices from every view that sees them.

    A vertex takes color from a view when it survives the z-buffer test
    (tolerance 1e-3 of the bbox diagonal) and faces the camera (normal
    against the viewing direction beyond cos 80 degrees); contributions
    are averaged with weight max(0, -n . view_dir). Vertices visible
    nowhere inherit the nearest colored vertex by breadth-first edge
    traversal.
    """
    if len(images) != len(cameras):
        raise ContractError(f"{len(images)} images vs {len(cameras)} cameras")
    if masks is not None and len(masks) != len(images):
        raise ContractError(f"{len(masks)} masks vs {len(images)} images")
    n_v = mesh.vertices.shape[0]
    normals = mesh.vertex_normals()
    eps_z = DEPTH_TOL_SCALE * mesh.bbox_diagonal()
    acc = np.zeros((n_v, 3))
    weight = np.zeros(n_v)
    for vi, (img, cam) in enumerate(zip(images, cameras)):
        img = np.asarray(img, dtype=np.float64)
        corr = raster_correspondence(mesh, cam)
        res = corr.face_index.shape[0]
        sx, sy, depth = cam.project(mesh.vertices)[:3]
        # viewing direction in world space: rays travel along -z of the view
        view_dir = -corr.rotation[2]
        facing = normals @ view_dir
        candidate = facing < -FACING_COS
        px = np.clip(np.floor(sx).astype(np.int64), 0, res - 1)
        py = np.clip(np.floor(sy).astype(np.int64), 0, res - 1)
        inside = (sx >= 0) & (sx < res) & (sy >= 0) & (sy < res)
        visible = candidate & inside & (depth >= corr.depth[py, px] - eps_z)
        visible &= corr.face_index[py, px] >= 0
        if not visible.any():
            continue
        wm = None if masks is None else np.asarray(masks[vi], dtype=np.float64)
        rgb, ok = _bilinear(img, sx[visible], sy[visible], wm)
        w = np.maximum(0.0, -facing[visible]) * ok
        idx = np.flatnonzero(visible)
        acc[idx] += w[:, None] * rgb
        weight[idx] += w
    colored = weight > 1e-12
    if not colored.any():
        raise ProjectionError("no vertex is visible in any view")
    colors = np.zeros((n_v, 3))
    colors[colored] = acc[colored] / weight[colored, None]
    if not colored.all():
        colors = _fill_by_bfs(mesh, colors, colored)
    return TriMesh(mesh.vertices.copy(), mesh.faces.copy(),
                   vertex_colors=np.clip(colors, 0.0, 1.0))


def _fill_by_bfs(mesh: TriMesh, colors: np.ndarray, colored: np.ndarray) -> np.ndarray:
    """Propagate colors outward from the colored set, one edge hop at a time."""
    adj = mesh.adjacency()
    colors = colors.copy()
    done = colored.copy()
    queue = deque(np.flatnonzero(colored).tolist())
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if not done[u]:
                colors[u] = colors[v]
                done[u] = True
                queue.append(u)
    if not done.all():
        raise ProjectionError(
            f"{int((~done).sum())} vertices unreachable from any colored vertex"
        )
    return colors


def feather_weights(mesh: TriMesh, vertex_mask: np.ndarray, feather: int) -> np.ndarray:
    """1 on the mask, decaying linearly to 0 over `feather` edge hops."""
    vertex_mask = np.asarray(vertex_mask, dtype=bool)
    if vertex_mask.shape != (mesh.vertices.shape[0],):
        raise ContractError(
            f"mask covers {vertex_mask.shape}, mesh has {mesh.vertices.shape[0]} vertices"
        )
    if feather < 0:
        raise ContractError(f"feather must be nonnegative, got {feather}")
    hops = np.full(mesh.vertices.shape[0], np.iinfo(np.int64).max, dtype=np.int64)
    hops[vertex_mask] = 0
    adj = mesh.adjacency()
    queue = deque(np.flatnonzero(vertex_mask).tolist())
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if hops[u] > hops[v] + 1:
                hops[u] = hops[v] + 1
                queue.append(u)
    w = 1.0 - hops / (feather + 1.0)
    return np.clip(w, 0.0, 1.0)


def blend_region(carved: TriMesh, init: TriMesh, vertex_mask: np.ndarray,
                 feather: int = 0) -> TriMesh:
    """Replace the masked region of the carved mesh with the initial one.

    positions = w * init + (1 - w) * carved with w from feather_weights;
    with feather 0 the weights are binary and the operation composes
    idempotently. Colors are carried from the carved mesh.
    """
    if carved.vertices.shape != init.vertices.shape or not np.array_equal(
        carved.faces, init.faces
    ):
        raise ContractError("blend_region needs identical topology")
    w = feather_weights(carved, vertex_mask, feather)[:, None]
    verts = w * init.vertices + (1.0 - w) * carved.vertices
    return TriMesh(verts, carved.faces.copy(), vertex_colors=carved.vertex_colors)

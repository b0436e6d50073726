"""File formats: RGBA PNG with mask alpha, normal-map PNG, binary PLY, OBJ.

Normal maps encode each component as round((n + 1) / 2 * 255); alpha is
255 * mask. All writers are deterministic byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ContractError
from .mesh import TriMesh


def save_png_rgba(path, rgb: np.ndarray, mask: np.ndarray):
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ContractError(f"expected (H, W, 3) image, got {rgb.shape}")
    buf = np.empty((*rgb.shape[:2], 4), dtype=np.uint8)
    buf[..., :3] = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf[..., 3] = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(buf, "RGBA").save(str(path))


def load_png_rgba(path) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(Image.open(str(path)).convert("RGBA"))
    rgb = arr[..., :3].astype(np.float64) / 255.0
    mask = arr[..., 3] > 127
    return rgb, mask


def save_normal_png(path, normals: np.ndarray, mask: np.ndarray):
    n = np.asarray(normals)
    if n.ndim != 3 or n.shape[2] != 3:
        raise ContractError(f"expected (H, W, 3) normal map, got {n.shape}")
    buf = np.empty((*n.shape[:2], 4), dtype=np.uint8)
    buf[..., :3] = np.round((np.clip(n, -1.0, 1.0) + 1.0) / 2.0 * 255.0).astype(np.uint8)
    buf[..., 3] = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(buf, "RGBA").save(str(path))


def load_normal_png(path) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(Image.open(str(path)).convert("RGBA"))
    n = arr[..., :3].astype(np.float64) / 255.0 * 2.0 - 1.0
    mask = arr[..., 3] > 127
    n[~mask] = 0.0
    return n, mask


def save_ply(path, mesh: TriMesh):
    """Binary little-endian PLY: float32 positions, uchar colors, int32 faces."""
    v = mesh.vertices.astype("<f4")
    if mesh.vertex_colors is not None:
        c = np.round(np.clip(mesh.vertex_colors, 0.0, 1.0) * 255.0).astype(np.uint8)
    else:
        c = np.full((len(v), 3), 200, dtype=np.uint8)
    f = mesh.faces.astype("<i4")
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(v)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        f"element face {len(f)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    vert_dtype = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)])
    vbuf = np.empty(len(v), dtype=vert_dtype)
    vbuf["xyz"] = v
    vbuf["rgb"] = c
    face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", 3)])
    fbuf = np.empty(len(f), dtype=face_dtype)
    fbuf["n"] = 3
    fbuf["idx"] = f
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(vbuf.tobytes())
        fh.write(fbuf.tobytes())


def load_ply(path) -> TriMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if end < 0:
        raise ContractError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    body = data[end + len(b"end_header\n"):]
    if "format binary_little_endian 1.0" not in header:
        raise ContractError(f"{path}: only binary little-endian PLY is supported")
    n_vert = n_face = 0
    for line in header:
        if line.startswith("element vertex"):
            n_vert = int(line.split()[-1])
        elif line.startswith("element face"):
            n_face = int(line.split()[-1])
    vert_dtype = np.dtype([("xyz", "<f4", 3), ("rgb", "u1", 3)])
    vbuf = np.frombuffer(body, dtype=vert_dtype, count=n_vert)
    off = n_vert * vert_dtype.itemsize
    face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", 3)])
    fbuf = np.frombuffer(body[off:], dtype=face_dtype, count=n_face)
    if (fbuf["n"] != 3).any():
        raise ContractError(f"{path}: non-triangular face in PLY")
    return TriMesh(
        vbuf["xyz"].astype(np.float64),
        fbuf["idx"].astype(np.int64),
        vertex_colors=vbuf["rgb"].astype(np.float64) / 255.0,
    )


def save_obj(path, mesh: TriMesh):
    vn = mesh.vertex_normals()
    lines = []
    for p in mesh.vertices:
        lines.append(f"v {p[0]:.8f} {p[1]:.8f} {p[2]:.8f}")
    for n in vn:
        lines.append(f"vn {n[0]:.8f} {n[1]:.8f} {n[2]:.8f}")
    for a, b, c in mesh.faces + 1:
        lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def save_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))

"""Multi-view normal-map error between two meshes.

Both meshes are rendered from the four canonical horizon views; the error
is the mean squared per-channel difference in the [0, 1]-encoded domain
over the union of the two coverage masks, averaged over views. A pixel
covered by only one mesh compares against the fixed background encoding
0.5 (the encoded zero vector).
"""

from __future__ import annotations

import numpy as np

from ..bodymodel.cameras import EVAL_AZIMUTHS, OrthoCamera
from ..bodymodel.mesh import TriMesh
from ..bodymodel.raster import rasterize_normals

BACKGROUND_ENCODING = 0.5


def normal_l2(
    a: TriMesh,
    b: TriMesh,
    resolution: int = 256,
    half_extent: float = 1.0,
    azimuths=EVAL_AZIMUTHS,
) -> float:
    per_view = []
    for az in azimuths:
        cam = OrthoCamera(az, half_extent=half_extent, resolution=resolution)
        na, ma = rasterize_normals(a, cam)
        nb, mb = rasterize_normals(b, cam)
        union = ma | mb
        if not union.any():
            per_view.append(0.0)
            continue
        ea = np.full_like(na, BACKGROUND_ENCODING)
        eb = np.full_like(nb, BACKGROUND_ENCODING)
        ea[ma] = (na[ma] + 1.0) / 2.0
        eb[mb] = (nb[mb] + 1.0) / 2.0
        diff = ea[union] - eb[union]
        per_view.append(float(np.mean(diff * diff)))
    return float(np.mean(per_view))

"""Synthetic blend-shape body stand-in, cameras, rasterization, and file I/O."""

from .mesh import TriMesh, icosphere
from .blendshape import (
    BETA_LIMIT,
    N_SHAPE_COEFFS,
    BlendShapeModel,
    ShapeParams,
    build_default_model,
    mesh_from_shape,
)
from .cameras import OrthoCamera, PerspCamera, ORTHO_AZIMUTHS, EVAL_AZIMUTHS
from .raster import (
    RasterResult,
    raster_correspondence,
    rasterize_colors,
    rasterize_normals,
)
from .synth import IdentitySample, synthesize_identity
from . import io

__all__ = [
    "TriMesh",
    "icosphere",
    "BETA_LIMIT",
    "N_SHAPE_COEFFS",
    "BlendShapeModel",
    "ShapeParams",
    "build_default_model",
    "mesh_from_shape",
    "OrthoCamera",
    "PerspCamera",
    "ORTHO_AZIMUTHS",
    "EVAL_AZIMUTHS",
    "RasterResult",
    "raster_correspondence",
    "rasterize_colors",
    "rasterize_normals",
    "IdentitySample",
    "synthesize_identity",
    "io",
]

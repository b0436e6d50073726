"""Evaluation metrics: geometry, image quality, and shape-space distances."""

from .geometry import (
    chamfer_cm,
    directed_surface_distances,
    p2s_cm,
    sample_surface,
    v2v_mm,
    v2v_meshes_mm,
)
from .image import psnr, ssim
from .normals import normal_l2
from .report import MetricReport, aggregate_reports

__all__ = [
    "chamfer_cm",
    "directed_surface_distances",
    "p2s_cm",
    "sample_surface",
    "v2v_mm",
    "v2v_meshes_mm",
    "psnr",
    "ssim",
    "normal_l2",
    "MetricReport",
    "aggregate_reports",
]

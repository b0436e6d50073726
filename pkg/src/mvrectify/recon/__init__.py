"""Mesh reconstruction: normal-driven carving, color projection, blending."""

from .carve import (
    CarveConfig,
    CarveRound,
    FrozenTargets,
    carve,
    carve_loss,
    carve_loss_grad,
    edge_energy_grad,
    freeze_targets,
    laplacian_energy_grad,
    normal_energy,
    normal_energy_grad,
    render_normal_targets,
    uniform_laplacian,
)
from .texture import blend_region, feather_weights, project_colors

__all__ = [
    "CarveConfig",
    "CarveRound",
    "FrozenTargets",
    "carve",
    "carve_loss",
    "carve_loss_grad",
    "edge_energy_grad",
    "freeze_targets",
    "laplacian_energy_grad",
    "normal_energy",
    "normal_energy_grad",
    "render_normal_targets",
    "uniform_laplacian",
    "blend_region",
    "feather_weights",
    "project_colors",
]

"""Orthographic and perspective cameras.

View space is right handed with the camera looking down -z; a larger
view-space z is closer to the camera. Screen coordinates are in pixel
units with y growing downward and pixel (row, col) centered at
(col + 0.5, row + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

# render set used for pose conditions and target views
ORTHO_AZIMUTHS = (0.0, 45.0, 90.0, 135.0, 180.0, 270.0)
# canonical views used by image and normal metrics
EVAL_AZIMUTHS = (0.0, 90.0, 180.0, 270.0)


@dataclass
class OrthoCamera:
    """Orthographic camera on the horizon circle (elevation fixed at 0)."""

    azimuth_deg: float
    half_extent: float = 1.0
    resolution: int = 256

    def __post_init__(self):
        if self.half_extent <= 0:
            raise ContractError(f"half_extent must be positive, got {self.half_extent}")
        if self.resolution < 2:
            raise ContractError(f"resolution must be at least 2, got {self.resolution}")

    def rotation(self) -> np.ndarray:
        """World-to-view rotation. Azimuth 0 looks down -z from +z."""
        a = np.deg2rad(self.azimuth_deg)
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])

    def view_positions(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation().T

    def project(self, points: np.ndarray):
        """Returns (sx, sy, depth) per point; depth is view-space z."""
        pv = self.view_positions(points)
        res, he = self.resolution, self.half_extent
        sx = (pv[:, 0] / he + 1.0) * res / 2.0
        sy = (1.0 - pv[:, 1] / he) * res / 2.0
        return sx, sy, pv[:, 2]

    def fits(self, points: np.ndarray) -> bool:
        pv = self.view_positions(points)
        return bool((np.abs(pv[:, :2]) <= self.half_extent).all())


@dataclass
class PerspCamera:
    """Pinhole camera. fov is the full vertical angle in degrees."""

    position: np.ndarray
    look_at: np.ndarray
    fov_deg: float = 40.0
    resolution: int = 256
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        if not (1.0 < self.fov_deg < 175.0):
            raise ContractError(f"fov_deg must be in (1, 175), got {self.fov_deg}")
        if np.linalg.norm(self.look_at - self.position) < 1e-12:
            raise ContractError("camera position and look_at coincide")

    def rotation(self) -> np.ndarray:
        backward = self.position - self.look_at
        backward = backward / np.linalg.norm(backward)
        right = np.cross(self.up, backward)
        ln = np.linalg.norm(right)
        if ln < 1e-12:
            raise ContractError("camera up vector is parallel to the view direction")
        right = right / ln
        true_up = np.cross(backward, right)
        return np.stack([right, true_up, backward])

    def view_positions(self, points: np.ndarray) -> np.ndarray:
        return (points - self.position) @ self.rotation().T

    def project(self, points: np.ndarray):
        """Returns (sx, sy, depth, valid); valid is False behind the camera."""
        pv = self.view_positions(points)
        z = pv[:, 2]
        valid = z < -1e-9
        t = np.tan(np.deg2rad(self.fov_deg) / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ndc_x = pv[:, 0] / (-z) / t
            ndc_y = pv[:, 1] / (-z) / t
        res = self.resolution
        sx = (ndc_x + 1.0) * res / 2.0
        sy = (1.0 - ndc_y) * res / 2.0
        return sx, sy, z, valid

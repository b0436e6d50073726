"""Linear blend-shape body stand-in.

A smooth ellipsoidal blob plays the role of a minimal human body: a
subdivided icosphere template plus a small bank of mutually orthogonal
low-frequency displacement fields. Pose presets are fixed per-vertex
rotation fields derived from the template, applied after blending, so a
mesh stays exactly linear in the shape coefficients for a given preset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ContractError
from .mesh import TriMesh, icosphere

BETA_LIMIT = 5.0
N_SHAPE_COEFFS = 10


@dataclass
class ShapeParams:
    """Shape coefficients, clamped to [-5, 5] at synthesis time."""

    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.beta.shape != (N_SHAPE_COEFFS,):
            raise ContractError(f"beta must be ({N_SHAPE_COEFFS},), got {self.beta.shape}")

    def validate(self):
        if not np.isfinite(self.beta).all():
            raise ContractError("beta contains non-finite values")
        if np.abs(self.beta).max() > BETA_LIMIT + 1e-9:
            raise ContractError(
                f"beta magnitude {np.abs(self.beta).max():.4f} exceeds the {BETA_LIMIT} bound"
            )
        return self


@dataclass
class BlendShapeModel:
    template: np.ndarray          # (V, 3) meters
    basis: np.ndarray             # (V, 3, K) orthogonal displacement fields
    faces: np.ndarray             # (F, 3)
    presets: dict = field(default_factory=dict)  # name -> (V, 3, 3) rotations

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_shapes(self) -> int:
        return self.basis.shape[2]

    def basis_matrix(self) -> np.ndarray:
        """Basis reshaped to (K, V*3), rows are flattened fields."""
        return self.basis.reshape(-1, self.basis.shape[2]).T.copy()


def _smooth_fields(rng: np.random.Generator, unit_pos: np.ndarray, count: int) -> np.ndarray:
    """Random smooth vector fields on the sphere, (V, 3, count)."""
    v = unit_pos
    fields = np.empty((v.shape[0], 3, count))
    for j in range(count):
        f = np.zeros((v.shape[0], 3))
        for _ in range(3):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            freq = rng.uniform(0.8, 2.6)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            amp = rng.uniform(0.5, 1.0)
            f += amp * np.sin(freq * (v @ axis) + phase)[:, None] * direction
        fields[:, :, j] = f
    return fields


def build_default_model(
    seed: int = 0,
    subdivisions: int = 4,
    n_shapes: int = N_SHAPE_COEFFS,
    semi_axes: tuple[float, float, float] = (0.35, 0.85, 0.25),
    displacement_rms: float = 0.02,
) -> BlendShapeModel:
    """Deterministic synthetic body model.

    The template is an ellipsoid roughly 1.7 m tall. Basis fields are
    orthogonalized against each other under the flattened dot product and
    scaled so one unit of a coefficient moves a vertex by
    displacement_rms meters on average.
    """
    unit, faces = icosphere(subdivisions)
    template = unit * np.asarray(semi_axes)[None, :]
    rng = np.random.default_rng(np.random.SeedSequence([0x6D7672, seed]))
    raw = _smooth_fields(rng, unit, n_shapes).reshape(-1, n_shapes)

    # Gram-Schmidt under the flattened inner product
    basis = np.empty_like(raw)
    for j in range(n_shapes):
        col = raw[:, j].copy()
        for i in range(j):
            col -= (basis[:, i] @ col) * basis[:, i]
        ln = np.linalg.norm(col)
        if ln < 1e-9:
            raise ContractError("degenerate shape basis draw; change the seed")
        basis[:, j] = col / ln
    basis *= displacement_rms * np.sqrt(template.shape[0])
    basis = basis.reshape(template.shape[0], 3, n_shapes)

    presets = {
        "T-pose": np.broadcast_to(np.eye(3), (template.shape[0], 3, 3)).copy(),
        "A-pose": _apose_rotations(template),
    }
    return BlendShapeModel(template=template, basis=basis, faces=faces, presets=presets)


def _apose_rotations(template: np.ndarray) -> np.ndarray:
    """Fixed per-vertex rotation field: a lean plus a gentle twist.

    Angles depend only on template height, so the map stays linear in the
    blended positions.
    """
    y = template[:, 1] / np.abs(template[:, 1]).max()
    lean = np.deg2rad(16.0) * y
    twist = np.deg2rad(11.0) * y
    cz, sz = np.cos(lean), np.sin(lean)
    cy, sy = np.cos(twist), np.sin(twist)
    rz = np.zeros((len(y), 3, 3))
    rz[:, 0, 0] = cz
    rz[:, 0, 1] = -sz
    rz[:, 1, 0] = sz
    rz[:, 1, 1] = cz
    rz[:, 2, 2] = 1.0
    ry = np.zeros((len(y), 3, 3))
    ry[:, 0, 0] = cy
    ry[:, 0, 2] = sy
    ry[:, 1, 1] = 1.0
    ry[:, 2, 0] = -sy
    ry[:, 2, 2] = cy
    return np.einsum("vij,vjk->vik", rz, ry)


def mesh_from_shape(
    model: BlendShapeModel,
    beta: np.ndarray | ShapeParams,
    preset: str = "T-pose",
    colors: np.ndarray | None = None,
) -> TriMesh:
    """positions = preset_rotation @ (template + sum_j beta_j basis_j)."""
    if isinstance(beta, ShapeParams):
        beta = beta.beta
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (model.n_shapes,):
        raise ContractError(f"beta must be ({model.n_shapes},), got {beta.shape}")
    if preset not in model.presets:
        raise ConfigurationError(
            f"unknown pose preset {preset!r}; known: {sorted(model.presets)}"
        )
    blended = model.template + model.basis @ beta
    rot = model.presets[preset]
    posed = np.einsum("vij,vj->vi", rot, blended)
    return TriMesh(posed, model.faces.copy(), vertex_colors=colors)

"""Normal-driven vertex optimization with frozen correspondences.

Each outer round rasterizes the current mesh once and freezes which
face every covered pixel belongs to; the inner loop then runs plain
gradient descent with a backtracking step control on

    sum_views sum_pixels ||n_face(V) - n_target||^2
    + lambda_laplacian ||L V||^2 + lambda_edge sum_e (|e| - e0)^2

where face normals are analytic in V. Because |n_face| == 1 and the
targets are unit too, the pixel term reduces per face to
cnt * 1 - 2 n.s + s2 with cnt, s, s2 accumulated once per round.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..bodymodel import TriMesh
from ..bodymodel.raster import raster_correspondence, rasterize_normals
from ..errors import ContractError, DivergenceError

MAX_HALVINGS = 8


@dataclass(frozen=True)
class CarveConfig:
    outer_iters: int = 8
    inner_steps: int = 30
    step_size: float = 1e-5
    lambda_normal: float = 1.0
    lambda_laplacian: float = 0.0
    lambda_edge: float = 0.0
    # Descent direction is (I + grad_smooth * (D - A))^-1 g instead of g.
    # The solve spreads concentrated silhouette-rim forces over the surface
    # so global inflation modes move; the energy and its minimizers are
    # untouched (SPD preconditioner), and the line search still guarantees
    # monotone accepted steps. 0 disables. Only used by the "gd" solver.
    grad_smooth: float = 0.0
    # "gd": gradient descent with backtracking (default; stays inside the
    # basin the alignment stage lands in). "gn": damped Gauss-Newton on
    # the frozen rounds; converges fast but trusts the frozen
    # correspondences further than they are valid, so it can wander on
    # raster-noise-scale residuals.
    solver: str = "gd"
    damping_init: float = 1e-3
    # Frozen correspondences are only trustworthy while vertices stay
    # within about a pixel of where they were rasterized, so gn steps are
    # clipped to this world-space length. 0 means auto: 0.75x the finest
    # view's pixel size.
    trust_radius: float = 0.0
    # Coarse-to-fine: search per-axis global scales about the centroid
    # before vertex-level descent. Local steps cannot fix a global size
    # mismatch (every view's slope data admits a shrink that mimics it),
    # so alignment comes first, as in standard registration practice.
    affine_align: bool = True

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_steps < 1:
            raise ContractError("outer_iters and inner_steps must be positive")
        if self.step_size <= 0:
            raise ContractError(f"step_size must be positive, got {self.step_size}")
        if self.solver not in ("gd", "gn"):
            raise ContractError(f"solver must be 'gd' or 'gn', got {self.solver!r}")
        if self.damping_init <= 0:
            raise ContractError("damping_init must be positive")
        if self.trust_radius < 0:
            raise ContractError("trust_radius must be nonnegative")
        for name in ("lambda_normal", "lambda_laplacian", "lambda_edge", "grad_smooth"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be nonnegative")


@dataclass
class CarveRound:
    round_index: int
    loss_start: float
    loss_end: float
    accepted_steps: int
    halvings: int
    max_displacement: float
    mean_displacement: float
    step_losses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "loss_start": self.loss_start,
            "loss_end": self.loss_end,
            "accepted_steps": self.accepted_steps,
            "halvings": self.halvings,
            "max_displacement": self.max_displacement,
            "mean_displacement": self.mean_displacement,
            "step_losses": list(self.step_losses),
        }


def uniform_laplacian(mesh: TriMesh) -> sp.csr_matrix:
    """L = I - D^-1 A over the mesh's edge graph."""
    edges = mesh.edges()
    v = mesh.vertices.shape[0]
    i = np.concatenate([edges[:, 0], edges[:, 1]])
    j = np.concatenate([edges[:, 1], edges[:, 0]])
    a = sp.coo_matrix((np.ones(i.size), (i, j)), shape=(v, v)).tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    if (deg == 0).any():
        raise ContractError("mesh has isolated vertices")
    dinv = sp.diags(1.0 / deg)
    return (sp.identity(v) - dinv @ a).tocsr()


@dataclass
class FrozenTargets:
    """Per-view face-level sums accumulated from one rasterization."""

    counts: list = field(default_factory=list)   # (F,) pixels per face
    sums: list = field(default_factory=list)     # (F,3) sum of target normals
    sq: list = field(default_factory=list)       # (F,) sum of |target|^2
    rotations: list = field(default_factory=list)
    total_pixels: int = 0


def freeze_targets(mesh: TriMesh, normal_maps, masks, cameras) -> FrozenTargets:
    """Rasterize once per view and pin pixel-to-face correspondence.

    Only pixels covered by both the render and the target mask count.
    """
    if not (len(normal_maps) == len(masks) == len(cameras)):
        raise ContractError(
            f"views mismatch: {len(normal_maps)} maps, {len(masks)} masks, "
            f"{len(cameras)} cameras"
        )
    if len(cameras) < 2:
        raise ContractError("carving needs at least 2 views")
    f_count = mesh.faces.shape[0]
    frozen = FrozenTargets()
    for nm, mk, cam in zip(normal_maps, masks, cameras):
        nm = np.asarray(nm, dtype=np.float64)
        mk = np.asarray(mk, dtype=bool)
        corr = raster_correspondence(mesh, cam)
        keep = (corr.face_index >= 0) & mk
        faces = corr.face_index[keep]
        targets = nm[keep]
        frozen.counts.append(np.bincount(faces, minlength=f_count).astype(np.float64))
        sums = np.zeros((f_count, 3))
        for c in range(3):
            sums[:, c] = np.bincount(faces, weights=targets[:, c], minlength=f_count)
        frozen.sums.append(sums)
        frozen.sq.append(
            np.bincount(faces, weights=(targets ** 2).sum(axis=1), minlength=f_count)
        )
        frozen.rotations.append(corr.rotation)
        frozen.total_pixels += int(keep.sum())
    return frozen


def _face_geometry(vertices: np.ndarray, faces: np.ndarray):
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    cross = np.cross(v1 - v0, v2 - v0)
    norm = np.linalg.norm(cross, axis=1)
    unit = cross / np.maximum(norm, 1e-300)[:, None]
    return v0, v1, v2, cross, norm, unit


def normal_energy(vertices: np.ndarray, faces: np.ndarray, frozen: FrozenTargets) -> float:
    _, _, _, _, _, unit = _face_geometry(vertices, faces)
    total = 0.0
    for cnt, s, sq, rot in zip(frozen.counts, frozen.sums, frozen.sq, frozen.rotations):
        n_view = unit @ rot.T
        total += float(cnt.sum() - 2.0 * (n_view * s).sum() + sq.sum())
    return total


def normal_energy_grad(vertices: np.ndarray, faces: np.ndarray, frozen: FrozenTargets):
    """Energy and its exact vertex gradient for the frozen pixel term."""
    v0, v1, v2, cross, norm, unit = _face_geometry(vertices, faces)
    total = 0.0
    g_world = np.zeros_like(cross)
    for cnt, s, sq, rot in zip(frozen.counts, frozen.sums, frozen.sq, frozen.rotations):
        n_view = unit @ rot.T
        total += float(cnt.sum() - 2.0 * (n_view * s).sum() + sq.sum())
        # d/dn_view of (cnt |n|^2 - 2 n.s) is 2(cnt n - s); |n|==1 keeps the
        # cnt term in the gradient even though it drops out of the value
        g_view = 2.0 * (cnt[:, None] * n_view - s)
        g_world += g_view @ rot
    # chain through unit = cross/|cross|: (I - n n^T)/|c| applied to g
    inv = 1.0 / np.maximum(norm, 1e-300)
    g_cross = (g_world - unit * (unit * g_world).sum(axis=1, keepdims=True)) * inv[:, None]
    grad = np.zeros_like(vertices)
    np.add.at(grad, faces[:, 0], np.cross(v1 - v2, g_cross))
    np.add.at(grad, faces[:, 1], np.cross(v2 - v0, g_cross))
    np.add.at(grad, faces[:, 2], np.cross(v0 - v1, g_cross))
    return total, grad


def _skew(a: np.ndarray) -> np.ndarray:
    """Batch of matrices S with S @ u == cross(a, u)."""
    s = np.zeros(a.shape[:-1] + (3, 3))
    s[..., 0, 1] = -a[..., 2]
    s[..., 0, 2] = a[..., 1]
    s[..., 1, 0] = a[..., 2]
    s[..., 1, 2] = -a[..., 0]
    s[..., 2, 0] = -a[..., 1]
    s[..., 2, 1] = a[..., 0]
    return s


def normal_gauss_newton(vertices: np.ndarray, faces: np.ndarray, frozen: FrozenTargets):
    """Gauss-Newton matrix for the pixel term: 2 sum_f w_f J_f^T J_f.

    w_f is the face's pixel count over all views (rotations drop out of
    J^T J because they are orthogonal). Returned in COO triplet form over
    flattened (3V) coordinates.
    """
    v0, v1, v2, cross, norm, unit = _face_geometry(vertices, faces)
    w = sum(frozen.counts)
    inv = 1.0 / np.maximum(norm, 1e-300)
    proj = np.eye(3)[None] - unit[:, :, None] * unit[:, None, :]
    a = np.stack([_skew(v2 - v1), _skew(v0 - v2), _skew(v1 - v0)], axis=1)
    jac = inv[:, None, None, None] * np.einsum("fab,fibc->fiac", proj, a)
    blocks = 2.0 * w[:, None, None, None, None] * np.einsum(
        "fiab,fjac->fibjc", jac, jac
    )
    idx = 3 * faces[:, :, None] + np.arange(3)[None, None, :]   # (F,3,3) coords
    flat = idx.reshape(-1, 9)
    rows = np.repeat(flat, 9, axis=1).ravel()
    cols = np.tile(flat, (1, 9)).ravel()
    return rows, cols, blocks.reshape(-1)


def edge_gauss_newton(vertices: np.ndarray, edges: np.ndarray):
    """GN blocks for sum_e (|e| - e0)^2: 2 d_hat d_hat^T with +/- signs."""
    d = vertices[edges[:, 0]] - vertices[edges[:, 1]]
    dhat = d / np.maximum(np.linalg.norm(d, axis=1), 1e-300)[:, None]
    outer = 2.0 * dhat[:, :, None] * dhat[:, None, :]
    i = 3 * edges[:, 0:1] + np.arange(3)[None, :]
    j = 3 * edges[:, 1:2] + np.arange(3)[None, :]
    rows, cols, vals = [], [], []
    for ri, ci, sign in ((i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)):
        rows.append(np.repeat(ri, 3, axis=1).ravel())
        cols.append(np.tile(ci, (1, 3)).ravel())
        vals.append(sign * outer.reshape(-1))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def carve_hessian(vertices, faces, frozen, cfg, lap_sq, edges) -> sp.csc_matrix:
    """Gauss-Newton approximation of the loss Hessian over flat coords."""
    n = 3 * vertices.shape[0]
    rows, cols, vals = normal_gauss_newton(vertices, faces, frozen)
    vals = cfg.lambda_normal * vals
    parts = [(rows, cols, vals)]
    if cfg.lambda_edge > 0:
        er, ec, ev = edge_gauss_newton(vertices, edges)
        parts.append((er, ec, cfg.lambda_edge * ev))
    h = sp.coo_matrix(
        (np.concatenate([p[2] for p in parts]),
         (np.concatenate([p[0] for p in parts]),
          np.concatenate([p[1] for p in parts]))),
        shape=(n, n),
    ).tocsc()
    if cfg.lambda_laplacian > 0:
        h = h + 2.0 * cfg.lambda_laplacian * sp.kron(lap_sq, sp.identity(3)).tocsc()
    return h


def laplacian_energy_grad(vertices: np.ndarray, lap_sq: sp.csr_matrix):
    lv = lap_sq @ vertices
    return float((vertices * lv).sum()), 2.0 * lv


def edge_energy_grad(vertices: np.ndarray, edges: np.ndarray, rest: np.ndarray):
    d = vertices[edges[:, 0]] - vertices[edges[:, 1]]
    length = np.linalg.norm(d, axis=1)
    diff = length - rest
    coef = 2.0 * diff / np.maximum(length, 1e-300)
    grad = np.zeros_like(vertices)
    np.add.at(grad, edges[:, 0], coef[:, None] * d)
    np.add.at(grad, edges[:, 1], -coef[:, None] * d)
    return float((diff ** 2).sum()), grad


def carve_loss_grad(vertices, faces, frozen, cfg, lap_sq, edges, rest):
    loss = 0.0
    grad = np.zeros_like(vertices)
    if cfg.lambda_normal > 0:
        e, g = normal_energy_grad(vertices, faces, frozen)
        loss += cfg.lambda_normal * e
        grad += cfg.lambda_normal * g
    if cfg.lambda_laplacian > 0:
        e, g = laplacian_energy_grad(vertices, lap_sq)
        loss += cfg.lambda_laplacian * e
        grad += cfg.lambda_laplacian * g
    if cfg.lambda_edge > 0:
        e, g = edge_energy_grad(vertices, edges, rest)
        loss += cfg.lambda_edge * e
        grad += cfg.lambda_edge * g
    return loss, grad


def carve_loss(vertices, faces, frozen, cfg, lap_sq, edges, rest) -> float:
    loss = 0.0
    if cfg.lambda_normal > 0:
        loss += cfg.lambda_normal * normal_energy(vertices, faces, frozen)
    if cfg.lambda_laplacian > 0:
        loss += cfg.lambda_laplacian * laplacian_energy_grad(vertices, lap_sq)[0]
    if cfg.lambda_edge > 0:
        loss += cfg.lambda_edge * edge_energy_grad(vertices, edges, rest)[0]
    return loss


def _mean_frozen_energy(vertices, faces, normal_maps, masks, cameras):
    """Per-pixel normal mismatch with fresh correspondences.

    The raw sum rewards silhouette shrinkage (fewer covered pixels, fewer
    terms), so scale selection must compare means.
    """
    frozen = freeze_targets(TriMesh(vertices, faces), normal_maps, masks, cameras)
    if frozen.total_pixels == 0:
        return np.inf
    return normal_energy(vertices, faces, frozen) / frozen.total_pixels


def affine_scale_stage(vertices, faces, normal_maps, masks, cameras,
                       lo: float = 0.75, hi: float = 1.35):
    """Fit per-axis global scales about the centroid by direct search.

    Coarse scan then golden-section refinement per axis, two sweeps,
    accepting only strict improvements of the mean per-pixel energy.
    Returns (scaled vertices, accepted move count).
    """
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    center = vertices.mean(axis=0)
    local = vertices - center

    def with_scale(scale3):
        return center + local * scale3

    scale3 = np.ones(3)
    start = _mean_frozen_energy(vertices, faces, normal_maps, masks, cameras)
    best = start
    accepted = 0
    for _ in range(2):
        for axis in range(3):
            def eval_s(s):
                trial = scale3.copy()
                trial[axis] = s
                return _mean_frozen_energy(
                    with_scale(trial), faces, normal_maps, masks, cameras
                )

            coarse = np.linspace(lo, hi, 13)
            errs = [eval_s(s) for s in coarse]
            k = int(np.argmin(errs))
            a, b = coarse[max(k - 1, 0)], coarse[min(k + 1, len(coarse) - 1)]
            c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
            fc, fd = eval_s(c), eval_s(d)
            for _ in range(14):
                if fc < fd:
                    b, d, fd = d, c, fc
                    c = b - inv_phi * (b - a)
                    fc = eval_s(c)
                else:
                    a, c, fc = c, d, fd
                    d = a + inv_phi * (b - a)
                    fd = eval_s(d)
            s_best = (a + b) / 2.0
            e_best = eval_s(s_best)
            if e_best < best - 1e-12:
                best = e_best
                scale3[axis] = s_best
                accepted += 1
    return with_scale(scale3), accepted, start, best


def carve(mesh: TriMesh, normal_maps, masks, cameras, cfg: CarveConfig):
    """Deform mesh vertices toward the target normals.

    Returns (carved mesh, list of CarveRound reports). Topology never
    changes. Raises DivergenceError when the loss or gradient goes
    non-finite in some round.
    """
    vertices = mesh.vertices.copy()
    faces = mesh.faces
    lap = uniform_laplacian(mesh)
    lap_sq = (lap.T @ lap).tocsr()
    edges = mesh.edges()
    rest = np.linalg.norm(
        mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1
    )
    precondition = None
    if cfg.grad_smooth > 0:
        nv = vertices.shape[0]
        ones = np.ones(edges.shape[0])
        adj = sp.coo_matrix(
            (np.concatenate([ones, ones]),
             (np.concatenate([edges[:, 0], edges[:, 1]]),
              np.concatenate([edges[:, 1], edges[:, 0]]))),
            shape=(nv, nv),
        ).tocsr()
        graph_lap = sp.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj
        solver = sp.linalg.splu((sp.identity(nv) + cfg.grad_smooth * graph_lap).tocsc())
        precondition = solver.solve
    rounds = []
    step = cfg.step_size
    mu = cfg.damping_init
    trust = cfg.trust_radius
    if trust == 0.0:
        trust = 0.75 * min(2.0 * cam.half_extent / cam.resolution for cam in cameras)
    if cfg.affine_align:
        before = vertices.copy()
        vertices, moves, e_start, e_end = affine_scale_stage(
            vertices, faces, normal_maps, masks, cameras
        )
        disp = np.linalg.norm(vertices - before, axis=1)
        # round -1 is the alignment stage; its loss fields are the mean
        # per-pixel energy it searches over, not the raw sum
        rounds.append(CarveRound(
            round_index=-1,
            loss_start=float(e_start),
            loss_end=float(e_end),
            accepted_steps=moves,
            halvings=0,
            max_displacement=float(disp.max()),
            mean_displacement=float(disp.mean()),
            step_losses=[float(e_start), float(e_end)],
        ))
    for rnd in range(cfg.outer_iters):
        frozen = freeze_targets(TriMesh(vertices, faces), normal_maps, masks, cameras)
        loss, grad = carve_loss_grad(vertices, faces, frozen, cfg, lap_sq, edges, rest)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(rnd)
        start_loss = loss
        start_v = vertices.copy()
        trace = [float(loss)]
        # accepted step carries across refreezes; doubling once per round
        # lets it recover after a conservative stretch
        step = min(2.0 * step, cfg.step_size)
        accepted = 0
        halvings = 0
        if cfg.solver == "gd":
            direction = precondition(grad) if precondition is not None else grad
        for _ in range(cfg.inner_steps):
            moved = False
            if cfg.solver == "gn":
                hess = carve_hessian(vertices, faces, frozen, cfg, lap_sq, edges)
                scale = hess.diagonal() + 1e-12
                for _ in range(MAX_HALVINGS + 1):
                    damped = (hess + sp.diags(mu * scale)).tocsc()
                    delta = sp.linalg.splu(damped).solve(-grad.ravel()).reshape(-1, 3)
                    longest = float(np.linalg.norm(delta, axis=1).max())
                    if longest > trust:
                        delta *= trust / longest
                    candidate = vertices + delta
                    cand_loss = carve_loss(
                        candidate, faces, frozen, cfg, lap_sq, edges, rest
                    )
                    if not np.isfinite(cand_loss):
                        raise DivergenceError(rnd)
                    if cand_loss <= loss:
                        vertices = candidate
                        loss = cand_loss
                        mu = max(mu / 3.0, 1e-9)
                        moved = True
                        break
                    mu *= 3.0
                    halvings += 1
            else:
                trial_step = step
                for _ in range(MAX_HALVINGS + 1):
                    candidate = vertices - trial_step * direction
                    cand_loss = carve_loss(
                        candidate, faces, frozen, cfg, lap_sq, edges, rest
                    )
                    if not np.isfinite(cand_loss):
                        raise DivergenceError(rnd)
                    if cand_loss <= loss:
                        vertices = candidate
                        loss = cand_loss
                        step = trial_step
                        moved = True
                        break
                    trial_step *= 0.5
                    halvings += 1
            if not moved:
                break
            accepted += 1
            trace.append(float(loss))
            loss, grad = carve_loss_grad(vertices, faces, frozen, cfg, lap_sq, edges, rest)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError(rnd)
            if cfg.solver == "gd":
                direction = precondition(grad) if precondition is not None else grad
        disp = np.linalg.norm(vertices - start_v, axis=1)
        rounds.append(CarveRound(
            round_index=rnd,
            loss_start=float(start_loss),
            loss_end=float(loss),
            accepted_steps=accepted,
            halvings=halvings,
            max_displacement=float(disp.max()),
            mean_displacement=float(disp.mean()),
            step_losses=trace,
        ))
    return TriMesh(vertices, faces.copy(), vertex_colors=mesh.vertex_colors), rounds


def render_normal_targets(mesh: TriMesh, cameras):
    """Oracle targets: rasterized view-space normals plus coverage masks."""
    maps, masks = [], []
    for cam in cameras:
        nm, mask = rasterize_normals(mesh, cam)
        maps.append(nm)
        masks.append(mask)
    return maps, masks

"""Flat key=value run configuration.

One human-readable file configures every command; all defaults live here
and the full effective mapping is echoed into each run's header so any
output directory documents exactly how it was produced.

Format: one `key = value` per line, `#` comments, blank lines ignored.
Types are fixed by the defaults table; unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .aggregation import I2mvTrainConfig, PcfaConfig
from .errors import ConfigurationError, ContractError
from .recon import CarveConfig
from .shape import ShapeConfig, ShapeTrainConfig

DEFAULTS: dict = {
    # global
    "seed": 0,
    "test_mode": True,          # deterministic runs, timings written as zeros
    "views_angles": "0,45,90,135,180,270",
    "views_eval": "0,90,180,270",
    # dataset synthesis
    "synth_identities": 2,
    "synth_refs": 8,
    "synth_resolution": 32,
    "synth_occlusion": 0.45,
    # multi-reference view regressor
    "pcfa_resolution": 32,
    "pcfa_patch": 8,
    "pcfa_d_model": 64,
    "pcfa_heads": 2,
    "pcfa_depth": 2,
    "pcfa_levels": 3,
    "pcfa_gamma": 2.0,
    "pcfa_pool": 3,
    "pcfa_corr_width": 64,
    "pcfa_strategy": "topk",
    "pcfa_steps": 600,
    "pcfa_lr": 0.03,
    "pcfa_momentum": 0.9,
    "pcfa_warmup": 40,
    "pcfa_refs_min": 3,
    "pcfa_refs_max": 8,
    "pcfa_target": "rgb",
    "pcfa_log_every": 25,
    # shape predictor
    "shape_resolution": 32,
    "shape_patch": 8,
    "shape_d_enc": 64,
    "shape_query_dim": 1024,
    "shape_depth": 6,
    "shape_attn_width": 64,
    "shape_ff_hidden": 256,
    "shape_heads": 1,
    "shape_steps": 1500,
    "shape_lr": 0.02,
    "shape_momentum": 0.9,
    "shape_warmup": 50,
    "shape_refs_min": 3,
    "shape_refs_max": 8,
    "shape_eval_every": 250,
    # mesh carving
    "carve_outer": 8,
    "carve_inner": 30,
    "carve_step": 1e-4,
    "carve_lambda_normal": 1.0,
    "carve_lambda_laplacian": 0.0,
    "carve_lambda_edge": 0.0,
    "carve_grad_smooth": 0.0,
    "carve_solver": "gd",
    "carve_damping": 1e-3,
    "carve_trust": 0.0,
    "carve_affine": True,
    "carve_resolution": 96,
    "carve_init_ply": "",       # empty: demo icosphere
    "carve_target_ply": "",     # empty: demo anisotropic scale of the init
    "carve_subdiv": 3,
    "carve_target_scale": "1.3,1.0,1.0",
    # inference pipeline
    "pipeline_normal_source": "oracle",   # oracle | predicted
    "pipeline_pose": "A-pose",
    "pipeline_blend": "",                 # "" disables; "ycap" protects the top cap
    "pipeline_blend_quantile": 0.9,
    "pipeline_feather": 2,
    # memory report
    "memreport_resolution": 64,
    "memreport_refs": "3,6,9,12",
    # metrics
    "metrics_chamfer_samples": 20000,
    "metrics_resolution": 128,
    # paths
    "paths_dataset": "",
    "paths_shape_ckpt": "",
    "paths_i2mv_ckpt": "",
    "paths_normal_ckpt": "",
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigurationError(f"{key} expects a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigurationError(f"{key} expects an integer, got {raw!r}")
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigurationError(f"{key} expects a number, got {raw!r}")
    return raw


def parse_float_list(text: str) -> tuple:
    """Comma-separated numbers -> tuple of floats."""
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    try:
        return tuple(float(t) for t in items)
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}")


def parse_int_list(text: str) -> tuple:
    vals = parse_float_list(text)
    if any(v != int(v) for v in vals):
        raise ConfigurationError(f"expected comma-separated integers, got {text!r}")
    return tuple(int(v) for v in vals)


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration: defaults overlaid with file overrides."""

    values: dict
    source: str = "<defaults>"

    def __getitem__(self, key: str):
        if key not in self.values:
            raise ConfigurationError(f"unknown config key {key!r}")
        return self.values[key]

    def echo(self) -> dict:
        """Full mapping for reproducibility headers, sorted by key."""
        return {k: self.values[k] for k in sorted(self.values)}

    def angles(self) -> tuple:
        return parse_float_list(self["views_angles"])

    def eval_angles(self) -> tuple:
        return parse_float_list(self["views_eval"])


def _validate(cfg: RunConfig) -> RunConfig:
    angles = cfg.angles()
    if len(set(angles)) != len(angles):
        raise ConfigurationError(f"views_angles must be distinct, got {angles}")
    missing = [a for a in cfg.eval_angles() if a not in angles]
    if missing:
        raise ConfigurationError(
            f"views_eval {missing} not contained in views_angles {angles}"
        )
    if cfg["pipeline_normal_source"] not in ("oracle", "predicted"):
        raise ConfigurationError(
            f"pipeline_normal_source must be oracle or predicted, "
            f"got {cfg['pipeline_normal_source']!r}"
        )
    if cfg["pipeline_blend"] not in ("", "ycap"):
        raise ConfigurationError(
            f"pipeline_blend must be empty or 'ycap', got {cfg['pipeline_blend']!r}"
        )
    if cfg["pipeline_pose"] not in ("A-pose", "T-pose"):
        raise ConfigurationError(
            f"pipeline_pose must be A-pose or T-pose, got {cfg['pipeline_pose']!r}"
        )
    return cfg


def load_config(path=None) -> RunConfig:
    """Read overrides from `path`; None means pure defaults."""
    values = dict(DEFAULTS)
    if path is None:
        return _validate(RunConfig(values))
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {p}")
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{p}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigurationError(f"{p}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    return _validate(RunConfig(values, source=str(p)))


def _built_from_config(ctor, /, **kwargs):
    # invalid values arriving via the config file are configuration
    # errors (exit 2), not runtime contract violations (exit 4)
    try:
        return ctor(**kwargs)
    except ContractError as exc:
        raise ConfigurationError(str(exc))


def pcfa_config(cfg: RunConfig) -> PcfaConfig:
    return _built_from_config(
        PcfaConfig,
        resolution=cfg["pcfa_resolution"],
        patch_size=cfg["pcfa_patch"],
        d_model=cfg["pcfa_d_model"],
        heads=cfg["pcfa_heads"],
        transformer_depth=cfg["pcfa_depth"],
        levels=cfg["pcfa_levels"],
        gamma=cfg["pcfa_gamma"],
        pool=cfg["pcfa_pool"],
        corr_width=cfg["pcfa_corr_width"],
    )


def i2mv_train_config(cfg: RunConfig, target: str | None = None) -> I2mvTrainConfig:
    return _built_from_config(
        I2mvTrainConfig,
        steps=cfg["pcfa_steps"],
        lr=cfg["pcfa_lr"],
        momentum=cfg["pcfa_momentum"],
        warmup=cfg["pcfa_warmup"],
        refs_min=cfg["pcfa_refs_min"],
        refs_max=cfg["pcfa_refs_max"],
        log_every=cfg["pcfa_log_every"],
        target=cfg["pcfa_target"] if target is None else target,
    )


def shape_config(cfg: RunConfig) -> ShapeConfig:
    return _built_from_config(
        ShapeConfig,
        resolution=cfg["shape_resolution"],
        patch_size=cfg["shape_patch"],
        d_enc=cfg["shape_d_enc"],
        query_dim=cfg["shape_query_dim"],
        depth=cfg["shape_depth"],
        attn_width=cfg["shape_attn_width"],
        ff_hidden=cfg["shape_ff_hidden"],
        heads=cfg["shape_heads"],
    )


def shape_train_config(cfg: RunConfig) -> ShapeTrainConfig:
    return _built_from_config(
        ShapeTrainConfig,
        steps=cfg["shape_steps"],
        lr=cfg["shape_lr"],
        momentum=cfg["shape_momentum"],
        warmup=cfg["shape_warmup"],
        refs_min=cfg["shape_refs_min"],
        refs_max=cfg["shape_refs_max"],
        eval_every=cfg["shape_eval_every"],
    )


def carve_config(cfg: RunConfig) -> CarveConfig:
    return _built_from_config(
        CarveConfig,
        outer_iters=cfg["carve_outer"],
        inner_steps=cfg["carve_inner"],
        step_size=cfg["carve_step"],
        lambda_normal=cfg["carve_lambda_normal"],
        lambda_laplacian=cfg["carve_lambda_laplacian"],
        lambda_edge=cfg["carve_lambda_edge"],
        grad_smooth=cfg["carve_grad_smooth"],
        solver=cfg["carve_solver"],
        damping_init=cfg["carve_damping"],
        trust_radius=cfg["carve_trust"],
        affine_align=cfg["carve_affine"],
    )

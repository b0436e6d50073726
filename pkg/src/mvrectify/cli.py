"""Command-line surface: synthesis, training, reconstruction, evaluation.

Seven subcommands share one flat key=value configuration file and one
seed. Every run writes a reproducibility header (config echo, seed,
code version) into its output directory, and output directories are
produced by write-to-temp plus atomic rename so a killed run never
corrupts a later one. With test_mode enabled (the default) all recorded
timings are zeros and no wall-clock or OS entropy reaches the outputs,
which makes reruns byte-identical.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 contract
violation.
"""

from __future__ import annotations

import argparse
import logging
import math
import shutil
import sys
import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .aggregation.memory import memory_report, rows_to_csv
from .aggregation.train import duplicate_refs, i2mv_forward, init_i2mv_params, train_i2mv
from .bodymodel import io as bio
from .bodymodel.blendshape import build_default_model, mesh_from_shape
from .bodymodel.cameras import OrthoCamera
from .bodymodel.mesh import TriMesh, icosphere
from .bodymodel.raster import rasterize_normals
from .bodymodel.synth import load_identity, save_identity, synthesize_identity
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    RunConfig,
    carve_config,
    i2mv_train_config,
    load_config,
    parse_float_list,
    parse_int_list,
    pcfa_config,
    shape_config,
    shape_train_config,
)
from .errors import ConfigurationError, ContractError
from .metrics.geometry import chamfer_cm, p2s_cm, v2v_mm
from .metrics.image import psnr, ssim
from .metrics.normals import normal_l2
from .metrics.report import MetricReport, aggregate_reports
from .params import ParamStore
from .recon.carve import carve
from .recon.texture import blend_region, project_colors
from .shape import predict_shape, train_shape

LOGGER = logging.getLogger("mvrectify.cli")

HEADER_NAME = "run_header.json"


# ---------------------------------------------------------------------------
# plumbing


class StageClock:
    """Per-stage wall time; frozen to zeros when live is False."""

    def __init__(self, live: bool):
        self.live = live
        self.stages: dict[str, float] = {}
        self._t0 = time.perf_counter() if live else 0.0

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter() if self.live else 0.0
        try:
            yield
        finally:
            dt = (time.perf_counter() - t0) if self.live else 0.0
            self.stages[name] = self.stages.get(name, 0.0) + dt

    def report(self) -> dict:
        total = (time.perf_counter() - self._t0) if self.live else 0.0
        return {"stages": dict(self.stages), "total_seconds": total}


def _workdir(out: Path) -> Path:
    """Fresh temp sibling of the output dir; leftovers are discarded."""
    tmp = out.parent / f".{out.name}.partial"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    return tmp


def _publish(tmp: Path, out: Path) -> None:
    # refuse to clobber a directory this tool did not produce
    if out.exists():
        if not (out / HEADER_NAME).exists():
            raise ConfigurationError(
                f"refusing to replace {out}: it is not a previous run "
                f"(missing {HEADER_NAME})"
            )
        shutil.rmtree(out)
    tmp.rename(out)


def _write_header(tmp: Path, command: str, cfg: RunConfig, seed: int) -> None:
    bio.save_json(
        tmp / HEADER_NAME,
        {
            "format": "mvrectify-run",
            "version": 1,
            "command": command,
            "code_version": __version__,
            "seed": seed,
            "config": cfg.echo(),
        },
    )


def _store_arrays(store: ParamStore) -> dict:
    return {name: var.value for name, var in store.items()}


def _store_from_arrays(arrays: dict) -> ParamStore:
    store = ParamStore()
    for name, arr in arrays.items():
        store.add(name, arr)
    return store


def _load_ckpt_store(path: str, stage: str) -> ParamStore:
    if not path:
        raise ConfigurationError(f"stage {stage!r} needs a checkpoint path in the config")
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"stage {stage!r}: checkpoint not found: {p}")
    arrays, _, _ = load_checkpoint(p)
    return _store_from_arrays(arrays)


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(repr(v) if isinstance(v, float) else str(v) for v in row)
                 for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _case_base(root: Path) -> Path:
    return root / "cases" if (root / "cases").is_dir() else root


def _load_dataset(cfg: RunConfig):
    """Identity samples from paths_dataset, or None when unset."""
    root = cfg["paths_dataset"]
    if not root:
        return None
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"paths_dataset is not a directory: {root}")
    base = _case_base(root)
    index = root / "index.json"
    if index.exists():
        dirs = [base / cid for cid in bio.load_json(index)["cases"]]
    else:
        dirs = sorted(p for p in base.iterdir() if (p / "meta.json").exists())
    if not dirs:
        raise ConfigurationError(f"no cases found under {root}")
    return [load_identity(d) for d in dirs]


def _synth_samples(cfg: RunConfig, seed: int, n: int | None = None):
    model = build_default_model()
    n = cfg["synth_identities"] if n is None else n
    return model, [
        synthesize_identity(
            seed + i,
            model,
            n_refs=cfg["synth_refs"],
            resolution=cfg["synth_resolution"],
            occlusion_prob=cfg["synth_occlusion"],
        )
        for i in range(n)
    ]


def _training_samples(cfg: RunConfig, seed: int, resolution: int):
    samples = _load_dataset(cfg)
    if samples is None:
        _, samples = _synth_samples(cfg, seed)
    bad = [s.identity_id for s in samples if s.resolution != resolution]
    if bad:
        raise ConfigurationError(
            f"dataset resolution mismatch: model expects {resolution}, "
            f"cases {bad} differ"
        )
    return samples


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg: RunConfig, seed: int, tmp: Path, clock: StageClock) -> None:
    with clock.stage("setup"):
        model = build_default_model()
    case_ids = []
    with clock.stage("synthesize"):
        for i in range(cfg["synth_identities"]):
            sample = synthesize_identity(
                seed + i,
                model,
                n_refs=cfg["synth_refs"],
                resolution=cfg["synth_resolution"],
                occlusion_prob=cfg["synth_occlusion"],
            )
            save_identity(tmp / "cases" / sample.identity_id, sample)
            case_ids.append(sample.identity_id)
    bio.save_json(
        tmp / "index.json",
        {
            "format": "mvrectify-dataset",
            "n_identities": len(case_ids),
            "cases": case_ids,
            "timings": clock.report(),
        },
    )
    LOGGER.info("synthesized %d identities", len(case_ids))


def cmd_pcfa_train(args, cfg: RunConfig, seed: int, tmp: Path, clock: StageClock) -> None:
    pcfa = pcfa_config(cfg)
    tcfg = i2mv_train_config(cfg)
    with clock.stage("data"):
        samples = _training_samples(cfg, seed, pcfa.resolution)
    with clock.stage("train"):
        store, result = train_i2mv(samples, pcfa, tcfg, seed)
    name = "i2mv" if tcfg.target == "rgb" else "normal"
    with clock.stage("export"):
        save_checkpoint(tmp / f"{name}.ckpt", _store_arrays(store),
                        config=cfg.echo(), seed=seed)
        _write_csv(tmp / "losses.csv", "step,loss",
                   [(i, v) for i, v in enumerate(result.losses, start=1)])
    bio.save_json(
        tmp / "summary.json",
        {
            "target": tcfg.target,
            "steps": result.steps,
            "final_loss": result.losses[-1],
            "n_identities": len(samples),
            "timings": clock.report(),
        },
    )
    LOGGER.info("trained %s regressor for %d steps", tcfg.target, result.steps)


def cmd_shape_train(args, cfg: RunConfig, seed: int, tmp: Path, clock: StageClock) -> None:
    scfg = shape_config(cfg)
    tcfg = shape_train_config(cfg)
    with clock.stage("data"):
        samples = _training_samples(cfg, seed, scfg.resolution)
        model = build_default_model()
    with clock.stage("train"):
        store, result = train_shape(samples, model, scfg, tcfg, seed, val_samples=samples)
    with clock.stage("export"):
        save_checkpoint(tmp / "shape.ckpt", _store_arrays(store),
                        config=cfg.echo(), seed=seed)
        _write_csv(tmp / "losses.csv", "step,loss",
                   [(i, v) for i, v in enumerate(result.losses, start=1)])
        _write_csv(tmp / "v2v.csv", "epoch,v2v_mm", result.v2v_curve)
    bio.save_json(
        tmp / "summary.json",
        {
            "steps": tcfg.steps,
            "final_loss": result.losses[-1],
            "final_v2v_mm": result.v2v_curve[-1][1] if result.v2v_curve else None,
            "n_identities": len(samples),
            "timings": clock.report(),
        },
    )
    LOGGER.info("trained shape regressor for %d steps", tcfg.steps)


def cmd_memreport(args, cfg: RunConfig, seed: int, tmp: Path, clock: StageClock) -> None:
    res = cfg["memreport_resolution"]
    ref_counts = parse_int_list(cfg["memreport_refs"])
    pcfa = replace(pcfa_config(cfg), resolution=res)
    with clock.stage("setup"):
        model = build_default_model()
    with clock.stage("measure"):
        sample = synthesize_identity(seed, model, n_refs=max(ref_counts), resolution=res)
        store = init_i2mv_params(pcfa, seed)
        rows = memory_report(
            store, pcfa, sample.ref_rgb, sample.ref_mask,
            sample.ortho_normal[0], ref_counts=ref_counts,
        )
    (tmp / "memreport.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    bio.save_json(
        tmp / "summary.json",
        {"resolution": res, "ref_counts": list(ref_counts), "timings": clock.report()},
    )
    LOGGER.info("measured %d strategy/N pairs at resolution %d", len(rows), res)


def _carve_inputs(cfg: RunConfig):
    """(init mesh, target mesh, half extent) for cmd_carve."""
    if cfg["carve_init_ply"]:
        init = bio.load_ply(Path(cfg["carve_init_ply"]))
    else:
        verts, faces = icosphere(cfg["carve_subdiv"])
        init = TriMesh(0.5 * verts, faces)
    if cfg["carve_target_ply"]:
        target = bio.load_ply(Path(cfg["carve_target_ply"]))
    else:
        scale = np.asarray(parse_float_list(cfg["carve_target_scale"]))
        if scale.shape != (3,):
            raise ConfigurationError(
                f"carve_target_scale needs three factors, got {cfg['carve_target_scale']!r}"
            )
        center = init.vertices.mean(axis=0)
        target = TriMesh(center + (init.vertices - center) * scale, init.faces.copy())
    if cfg["carve_init_ply"] or cfg["carve_target_ply"]:
        span = max(np.abs(init.vertices).max(), np.abs(target.vertices).max())
        half_extent = float(1.1 * span)
    else:
        half_extent = 1.0
    return init, target, half_extent


def cmd_carve(args, cfg: RunConfig, seed: int, tmp: Path, clock: StageClock) -> None:
    ccfg = carve_config(cfg)
    with clock.stage("setup"):
        init, target, half_extent = _carve_inputs(cfg)
        cameras = [
            OrthoCamera(az, half_extent=half_extent, resolution=cfg["carve_resolution"])
            for az in cfg.angles()
        ]
        rendered = [rasterize_normals(target, cam) for cam in cameras]
        nmaps = [n for n, _ in rendered]
        nmasks = [m for _, m in rendered]
    with clock.stage("carve"):
        carved, rounds = carve(init, nmaps, nmasks, cameras, ccfg)
    with clock.stage("export"):
        bio.save_ply(tmp / "carved.ply", carved)
        bio.save_json(tmp / "rounds.json", [r.to_dict() for r in rounds])
        samples = cfg["metrics_chamfer_samples"]
        bio.save_json(
            tmp / "report.json",
            {
                "chamfer_cm": chamfer_cm(carved, target, n_samples=samples, seed=seed),
                "p2s_cm": p2s_cm(target, carved, n_samples=samples, seed=seed),
                "loss_first": rounds[0].loss_start,
                "loss_last": rounds[-1].loss_end,
                "timings": clock.report(),
            },
        )
    LOGGER.info("carved %d rounds", len(rounds))


def _load_mask_file(path: Path) -> np.ndarray:
    _, mask = bio.load_png_rgba(path)
    return mask


def _load_manifest(case: Path) -> dict:
    """Normalize a synth case dir or a manifest JSON into one dict."""
    if case.is_dir():
        if not (case / "meta.json").exists():
            raise ConfigurationError(f"{case} has no meta.json; not a synthesized case")
        meta = bio.load_json(case / "meta.json")
        refs = sorted(case.glob("ref_*.png"))
        if not refs:
            raise ConfigurationError(f"{case} contains no reference images")
        beta_file = case / "beta.json"
        beta = np.asarray(bio.load_json(beta_file)["beta"]) if beta_file.exists() else None
        mesh = case / "mesh.ply"
        return {
            "identity_id": meta["identity_id"],
            "refs": refs,
            "masks": None,
            "beta": beta,
            "gt_mesh": mesh if mesh.exists() else None,
        }
    if case.suffix != ".json":
        raise ConfigurationError(f"{case} is neither a case directory nor a manifest JSON")
    raw = bio.load_json(case)
    base = case.parent
    refs = [base / p for p in raw.get("refs", [])]
    if not refs:
        raise ConfigurationError(f"manifest {case} lists no references")
    masks = raw.get("masks")
    if masks is not None:
        if len(masks) != len(refs):
            raise ConfigurationError(
                f"manifest {case}: {len(masks)} masks for {len(refs)} references"
            )
        masks = [base / p for p in masks]
    beta = raw.get("beta")
    if isinstance(beta, str):
        beta = bio.load_json(base / beta)["beta"]
    gt_mesh = raw.get("gt_mesh")
    return {
        "identity_id": raw.get("identity_id", case.stem),
        "refs": refs,
        "masks": masks,
        "beta": None if beta is None else np.asarray(beta, dtype=np.float64),
        "gt_mesh": None if gt_mesh is None else base / gt_mesh,
    }


def cmd_pipeline(args, cfg: RunConfig, seed: int, tmp: Path, clock: StageClock) -> None:
    manifest = _load_manifest(Path(args.case))
    pcfa = pcfa_config(cfg)
    scfg = shape_config(cfg)
    angles = cfg.angles()
    model = build_default_model()

    with clock.stage("load"):
        loaded = [bio.load_png_rgba(p) for p in manifest["refs"]]
        refs = np.stack([rgb for rgb, _ in loaded])
        if manifest["masks"] is None:
            masks = np.stack([m for _, m in loaded])
        else:
            masks = np.stack([_load_mask_file(p) for p in manifest["masks"]])
        shape_store = _load_ckpt_store(cfg["paths_shape_ckpt"], "shape")
        i2mv_store = _load_ckpt_store(cfg["paths_i2mv_ckpt"], "views")
        normal_store = None
        if cfg["pipeline_normal_source"] == "predicted":
            normal_store = _load_ckpt_store(cfg["paths_normal_ckpt"], "normals")
        gt_mesh = None
        if manifest["gt_mesh"] is not None:
            gt_mesh = bio.load_ply(manifest["gt_mesh"])

    with clock.stage("shape"):
        if refs.shape[1] != scfg.resolution:
            raise ConfigurationError(
                f"references are {refs.shape[1]}px but the shape model expects "
                f"{scfg.resolution}px"
            )
        beta_hat = predict_shape(shape_store, scfg, refs)
        pred_mesh = mesh_from_shape(model, beta_hat, preset=cfg["pipeline_pose"])

    with clock.stage("pose_render"):
        view_cams = [
            OrthoCamera(az, half_extent=1.0, resolution=pcfa.resolution) for az in angles
        ]
        rendered = [rasterize_normals(pred_mesh, cam) for cam in view_cams]
        pose_maps = np.stack([n for n, _ in rendered])
        pose_masks = np.stack([m for _, m in rendered])

    with clock.stage("views"):
        minimum = math.ceil(pcfa.gamma)
        n_given = len(refs)
        agg_refs, agg_masks = refs, masks
        if n_given < minimum:
            LOGGER.warning(
                "only %d references for a top-k budget needing %d; duplicating",
                n_given, minimum,
            )
            agg_refs, agg_masks = duplicate_refs(refs, masks, minimum)
        images = np.clip(
            i2mv_forward(i2mv_store, pcfa, agg_refs, agg_masks, pose_maps,
                         strategy=cfg["pcfa_strategy"]).value,
            0.0, 1.0,
        )

    with clock.stage("normals"):
        if cfg["pipeline_normal_source"] == "oracle":
            if gt_mesh is None:
                raise ConfigurationError(
                    "stage 'normals': oracle source needs a ground-truth mesh "
                    "in the manifest"
                )
            carve_cams = [
                OrthoCamera(az, half_extent=1.0, resolution=cfg["carve_resolution"])
                for az in angles
            ]
            rendered = [rasterize_normals(gt_mesh, cam) for cam in carve_cams]
            nmaps = [n for n, _ in rendered]
            nmasks = [m for _, m in rendered]
        else:
            raw = i2mv_forward(normal_store, pcfa, agg_refs, agg_masks, pose_maps,
                               strategy=cfg["pcfa_strategy"]).value
            norms = np.linalg.norm(raw, axis=-1, keepdims=True)
            nmaps = list(raw / np.maximum(norms, 1e-8))
            nmasks = list(pose_masks)
            carve_cams = view_cams

    with clock.stage("carve"):
        carved, rounds = carve(pred_mesh, nmaps, nmasks, carve_cams, carve_config(cfg))

    with clock.stage("colors"):
        final = project_colors(carved, images, view_cams)

    if cfg["pipeline_blend"] == "ycap":
        with clock.stage("blend"):
            heights = pred_mesh.vertices[:, 1]
            cap = heights >= np.quantile(heights, cfg["pipeline_blend_quantile"])
            final = blend_region(final, pred_mesh, cap, feather=cfg["pipeline_feather"])

    with clock.stage("export"):
        bio.save_ply(tmp / "mesh.ply", final)
        bio.save_json(
            tmp / "beta.json",
            {"beta": beta_hat.tolist(), "pose": cfg["pipeline_pose"]},
        )
        for az, image, mask in zip(angles, images, pose_masks):
            bio.save_png_rgba(tmp / f"ortho_{int(round(az)):03d}.png", image, mask)
        bio.save_json(tmp / "rounds.json", [r.to_dict() for r in rounds])

    metrics = None
    if gt_mesh is not None:
        samples = cfg["metrics_chamfer_samples"]
        metrics = {
            "chamfer_cm": chamfer_cm(final, gt_mesh, n_samples=samples, seed=seed),
            "p2s_cm": p2s_cm(gt_mesh, final, n_samples=samples, seed=seed),
        }
        if manifest["beta"] is not None:
            metrics["v2v_mm"] = v2v_mm(beta_hat, manifest["beta"], model)
    timing = clock.report()
    bio.save_json(
        tmp / "report.json",
        {
            "identity_id": manifest["identity_id"],
            "n_references": n_given,
            "duplicated_to": None if n_given >= minimum else minimum,
            "normal_source": cfg["pipeline_normal_source"],
            "stages": timing["stages"],
            "total_seconds": timing["total_seconds"],
            "metrics": metrics,
        },
    )
    LOGGER.info("pipeline finished for %s", manifest["identity_id"])


def _eval_case_ids(root: Path) -> list[str]:
    if not root.is_dir():
        raise ConfigurationError(f"not a directory: {root}")
    base = _case_base(root)
    return sorted(
        p.name for p in base.iterdir() if p.is_dir() and not p.name.startswith(".")
    )


def _eval_one(case_id: str, pred: Path, gt: Path, cfg: RunConfig, seed: int,
              model) -> MetricReport:
    fields = {}
    pred_mesh = gt_mesh = None
    if (pred / "mesh.ply").exists() and (gt / "mesh.ply").exists():
        pred_mesh = bio.load_ply(pred / "mesh.ply")
        gt_mesh = bio.load_ply(gt / "mesh.ply")
        samples = cfg["metrics_chamfer_samples"]
        fields["chamfer_cm"] = chamfer_cm(pred_mesh, gt_mesh, n_samples=samples, seed=seed)
        fields["p2s_cm"] = p2s_cm(gt_mesh, pred_mesh, n_samples=samples, seed=seed)
        fields["normal_l2"] = normal_l2(
            pred_mesh, gt_mesh,
            resolution=cfg["metrics_resolution"],
            azimuths=cfg.eval_angles(),
        )
    if (pred / "beta.json").exists() and (gt / "beta.json").exists():
        beta_p = np.asarray(bio.load_json(pred / "beta.json")["beta"])
        beta_g = np.asarray(bio.load_json(gt / "beta.json")["beta"])
        fields["v2v_mm"] = v2v_mm(beta_p, beta_g, model)
    psnrs, ssims = [], []
    for az in cfg.eval_angles():
        name = f"ortho_{int(round(az)):03d}.png"
        if (pred / name).exists() and (gt / name).exists():
            rgb_p, _ = bio.load_png_rgba(pred / name)
            rgb_g, _ = bio.load_png_rgba(gt / name)
            psnrs.append(psnr(rgb_p, rgb_g))
            ssims.append(ssim(rgb_p, rgb_g))
    if psnrs:
        fields["psnr_db"] = float(np.mean(psnrs))
        fields["ssim"] = float(np.mean(ssims))
    return MetricReport(case_id=case_id, **fields)


def cmd_eval(args, cfg: RunConfig, seed: int, tmp: Path, clock: StageClock) -> None:
    pred_root = Path(args.pred)
    gt_root = Path(args.gt)
    pred_ids = _eval_case_ids(pred_root)
    gt_ids = _eval_case_ids(gt_root)
    only_pred = sorted(set(pred_ids) - set(gt_ids))
    only_gt = sorted(set(gt_ids) - set(pred_ids))
    if only_pred or only_gt:
        raise ContractError(
            f"case ids do not pair up: only in predictions {only_pred}, "
            f"only in ground truth {only_gt}"
        )
    if not pred_ids:
        raise ConfigurationError("no cases to evaluate")
    with clock.stage("setup"):
        model = build_default_model()
    reports = []
    with clock.stage("evaluate"):
        (tmp / "cases").mkdir()
        for cid in pred_ids:
            report = _eval_one(
                cid, _case_base(pred_root) / cid, _case_base(gt_root) / cid,
                cfg, seed, model,
            )
            reports.append(report)
            bio.save_json(tmp / "cases" / f"{cid}.json", report.to_dict())
    agg = aggregate_reports(reports)
    names = MetricReport.metric_names()
    header = "n_cases," + ",".join(names)
    row = [agg["n_cases"]] + [agg[n] if agg[n] is not None else "" for n in names]
    _write_csv(tmp / "aggregate.csv", header, [row])
    bio.save_json(tmp / "aggregate.json", {**agg, "timings": clock.report()})
    LOGGER.info("evaluated %d cases", len(reports))


# ---------------------------------------------------------------------------
# entry point


COMMANDS = {
    "synth": cmd_synth,
    "pipeline": cmd_pipeline,
    "eval": cmd_eval,
    "memreport": cmd_memreport,
    "pcfa-train": cmd_pcfa_train,
    "shape-train": cmd_shape_train,
    "carve": cmd_carve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvrectify",
        description="Multi-view human reconstruction toolkit",
    )
    parser.add_argument("--config", help="key=value config file (defaults when omitted)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory (atomically replaced)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="synthesize a dataset of identities")
    p = sub.add_parser("pipeline", help="reconstruct one case end to end")
    p.add_argument("case", help="synthesized case directory or manifest JSON")
    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("pred", help="directory of predicted cases")
    p.add_argument("gt", help="directory of ground-truth cases")
    sub.add_parser("memreport", help="aggregation memory/token accounting")
    sub.add_parser("pcfa-train", help="train the multi-view image regressor")
    sub.add_parser("shape-train", help="train the body shape regressor")
    sub.add_parser("carve", help="normal-driven carving demo or PLY-to-PLY run")
    return parser


def run(args) -> None:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    if args.out is None:
        raise ConfigurationError("--out is required")
    out = Path(args.out)
    if out.exists() and not (out / HEADER_NAME).exists():
        raise ConfigurationError(
            f"refusing to replace {out}: it is not a previous run (missing {HEADER_NAME})"
        )
    tmp = _workdir(out)
    try:
        _write_header(tmp, args.command, cfg, seed)
        clock = StageClock(live=not cfg["test_mode"])
        COMMANDS[args.command](args, cfg, seed, tmp, clock)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _publish(tmp, out)


def main(argv=None) -> int:
    if not logging.getLogger().handlers:
        logging.basicConfig(
            level=logging.INFO, stream=sys.stderr,
            format="%(levelname)s %(name)s: %(message)s",
        )
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

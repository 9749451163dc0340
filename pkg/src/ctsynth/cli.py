"""Command-line entry point wiring all modules.

Exit codes: 0 success, 2 usage error, 3 file/I-O error, 4 config/schema
error, 5 generation error (placement exhausted, sub-resolution spec),
6 data-contract error (dim mismatch, bad mask values, bad trajectory).
Failures print one JSON line to stderr: {"error": category, "message": ...}.
All randomness is governed by --seed; every subcommand that writes files
also writes a record or manifest sufficient to reproduce them.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .config import Config, load_config
from .core import BinaryMask, VoxelGrid
from .dataset import (
    derive_seed,
    file_sha256,
    host_liver_stats,
    load_pool,
    make_validation_set,
    materialize_stream,
    sample_spec,
    synthesize_with_respec,
)
from .errors import ConfigError, CtSynthError
from .metrics import evaluate_cases
from .niftiio import (
    preprocess,
    read_mask,
    read_volume,
    write_grid,
    write_mask,
    write_volume,
)
from .selection import (
    StudyConfig,
    read_trajectories,
    select_best,
    simulate_selection_study,
)
from .shapes import generate_shape
from .textures import TextureSpec, generate_texture
from .vessels import segment_vessels

EXIT_OK = 0
EXIT_USAGE = 2
_CATEGORY_CODES = {"io": 3, "config": 4, "generation": 5, "data": 6, "error": 1}


def _fail(category: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return _CATEGORY_CODES.get(category, 1)


def _write_record(path: Path, payload: dict) -> None:
    payload = {"generator_version": __version__, **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_liver(path: str) -> BinaryMask:
    return read_mask(path).liver()


def _load_tumor_mask(path: Path) -> BinaryMask:
    """Binary masks {0,1} read as-is; 3-label masks use label 2 as tumor."""
    label = read_mask(path)
    data = label.data
    tumor = data == 2 if data.max() == 2 else data == 1
    return BinaryMask(VoxelGrid(tumor, label.spacing))


# --------------------------------------------------------------------------
# subcommand implementations


def _cmd_preprocess(args) -> int:
    cfg = load_config(args.config)
    volume = read_volume(args.volume)
    params = cfg.preprocess_params()
    out_grid = preprocess(volume, params)
    write_grid(out_grid, args.out)
    _write_record(
        Path(str(args.out) + ".record.json"),
        {
            "command": "preprocess",
            "input": str(args.volume),
            "input_sha256": file_sha256(args.volume),
            "params": {
                "clip_min": params.clip_min,
                "clip_max": params.clip_max,
                "normalize": params.normalize,
            },
        },
    )
    return EXIT_OK


def _cmd_vessels(args) -> int:
    cfg = load_config(args.config)
    volume = read_volume(args.volume)
    liver = _load_liver(args.liver)
    mask = segment_vessels(volume, liver, cfg.vessel_params())
    write_mask(mask, args.out)
    _write_record(
        Path(str(args.out) + ".record.json"),
        {
            "command": "vessels",
            "volume": str(args.volume),
            "volume_sha256": file_sha256(args.volume),
            "liver": str(args.liver),
            "liver_sha256": file_sha256(args.liver),
            "params": cfg.to_dict()["vessels"],
            "vessel_voxels": mask.count,
        },
    )
    return EXIT_OK


def _cmd_shapes(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = cfg.classes()
    if args.size_class != "mix":
        classes = [c for c in classes if c.name == args.size_class]
        if not classes:
            raise ConfigError(f"unknown size class {args.size_class!r}")
    sampler = cfg.sampler()
    stats_proxy = host_liver_stats_proxy(args.spacing)
    items = []
    masks = []
    for i in range(args.count):
        size_class = classes[i % len(classes)]
        seed = derive_seed(args.seed, "shapes", i)
        spec = sample_spec(size_class, stats_proxy, seed, sampler)
        mask = generate_shape(
            spec.ellipsoid, spec.deform, (args.spacing,) * 3, spec.radius_range_mm
        )
        name = f"shape_{i:03d}_{size_class.name}.nii.gz"
        write_mask(mask, out_dir / name)
        masks.append(mask.data.astype(np.uint8))
        items.append(
            {
                "file": name,
                "size_class": size_class.name,
                "seed": seed,
                "semi_axes_mm": [spec.ellipsoid.a, spec.ellipsoid.b, spec.ellipsoid.c],
                "sigma_d": spec.deform.sigma_d,
                "voxel_count": mask.count,
            }
        )
    if args.montage:
        from .report import render_mask_montage

        render_mask_montage(
            masks, out_dir / "montage.png", titles=[it["size_class"] for it in items]
        )
    _write_record(
        out_dir / "manifest.json",
        {
            "command": "shapes",
            "seed": args.seed,
            "spacing_mm": args.spacing,
            "items": items,
            "config": cfg.to_dict(),
        },
    )
    return EXIT_OK


def host_liver_stats_proxy(spacing: float):
    """Host-independent stats for standalone shape/texture galleries."""
    from .dataset import HostStats

    return HostStats(mean_hu=90.0, std_hu=10.0, min_spacing_mm=float(spacing))


def _cmd_textures(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = tuple(int(v) for v in args.dims.split(","))
    if len(dims) != 3:
        raise ConfigError(f"--dims must be three comma-separated integers, got {args.dims!r}")
    items = []
    blocks = []
    for i in range(args.count):
        seed = derive_seed(args.seed, "textures", i)
        spec = TextureSpec(
            mu=args.mu,
            sigma_g=args.sigma_g,
            coarse_factor=cfg.texture.coarse_factor,
            blur_sigma=cfg.texture.blur_sigma,
            seed=seed,
        )
        grid = generate_texture(dims, spec)
        name = f"texture_{i:03d}.nii.gz"
        write_grid(grid, out_dir / name)
        blocks.append(grid.data)
        items.append({"file": name, "seed": seed, "mu": args.mu, "sigma_g": args.sigma_g})
    if args.montage:
        from .report import render_mask_montage

        render_mask_montage(blocks, out_dir / "montage.png")
    _write_record(
        out_dir / "manifest.json",
        {
            "command": "textures",
            "seed": args.seed,
            "dims": list(dims),
            "items": items,
            "config": cfg.to_dict(),
        },
    )
    return EXIT_OK


def _cmd_synth(args) -> int:
    cfg = load_config(args.config)
    volume = read_volume(args.volume)
    liver = _load_liver(args.liver)
    classes = cfg.classes_by_name()
    rng = np.random.default_rng(derive_seed(args.seed, "synth", "classes"))
    if args.size_class == "mix":
        mix = cfg.mix()
        names = [c.name for c in cfg.classes()]
        probs = [mix.get(n, 0.0) for n in names]
        chosen = [names[int(i)] for i in rng.choice(len(names), size=args.num_tumors, p=probs)]
    else:
        if args.size_class not in classes:
            raise ConfigError(f"unknown size class {args.size_class!r}")
        chosen = [args.size_class] * args.num_tumors
    vessels = segment_vessels(volume, liver, cfg.vessel_params())
    out, label, records, attempts = synthesize_with_respec(
        volume,
        liver,
        [classes[n] for n in chosen],
        derive_seed(args.seed, "synth"),
        cfg.sampler(),
        cfg.placement_params(),
        vessels,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_volume(out, out_dir / "image.nii.gz")
    write_mask(label, out_dir / "label.nii.gz")
    _write_record(
        out_dir / "record.json",
        {
            "command": "synth",
            "seed": args.seed,
            "volume": str(args.volume),
            "volume_sha256": file_sha256(args.volume),
            "liver": str(args.liver),
            "liver_sha256": file_sha256(args.liver),
            "size_classes": chosen,
            "respec_attempts": attempts,
            "tumors": [r.to_dict() for r in records],
            "image_sha256": file_sha256(out_dir / "image.nii.gz"),
            "label_sha256": file_sha256(out_dir / "label.nii.gz"),
            "config": cfg.to_dict(),
        },
    )
    return EXIT_OK


def _cmd_make_validation(args) -> int:
    cfg = load_config(args.config)
    pool = load_pool(args.pool)
    classes = cfg.classes_by_name()
    names = args.classes.split(",") if args.classes else ["small", "medium", "large"]
    unknown = [n for n in names if n not in classes]
    if unknown:
        raise ConfigError(f"unknown size class(es) {unknown}")
    make_validation_set(
        pool,
        [classes[n] for n in names],
        args.seed,
        args.out_dir,
        sampler=cfg.sampler(),
        placement=cfg.placement_params(),
        vessel_params=cfg.vessel_params(),
        workers=args.workers,
        config_echo=cfg.to_dict(),
    )
    return EXIT_OK


def _cmd_stream(args) -> int:
    cfg = load_config(args.config)
    pool = load_pool(args.pool)
    materialize_stream(
        pool,
        cfg.mix(),
        args.seed,
        args.count,
        args.out_dir,
        classes=cfg.classes(),
        sampler=cfg.sampler(),
        placement=cfg.placement_params(),
        vessel_params=cfg.vessel_params(),
        tumors_per_volume=cfg.tumors_per_volume(),
        workers=args.workers,
        config_echo=cfg.to_dict(),
    )
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    pred_dir = Path(args.pred_dir)
    gt_dir = Path(args.gt_dir)
    pred_files = {p.name: p for p in sorted(pred_dir.glob("*.nii*"))}
    gt_files = {p.name: p for p in sorted(gt_dir.glob("*.nii*"))}
    common = sorted(set(pred_files) & set(gt_files))
    if not common:
        raise ConfigError(f"no matching filenames between {pred_dir} and {gt_dir}")
    only_pred = set(pred_files) - set(gt_files)
    only_gt = set(gt_files) - set(pred_files)
    if only_pred or only_gt:
        raise ConfigError(
            f"unpaired files: pred-only {sorted(only_pred)}, gt-only {sorted(only_gt)}"
        )
    cases = [
        (name, _load_tumor_mask(pred_files[name]), _load_tumor_mask(gt_files[name]))
        for name in common
    ]
    m = cfg.metrics
    report = evaluate_cases(
        cases,
        cfg.classes(),
        overlap_frac=m.overlap_frac,
        ci_level=m.ci_level,
        ci_resamples=m.bootstrap_resamples,
        ci_seed=m.bootstrap_seed,
        config=cfg.to_dict(),
    )
    doc = report.to_dict()
    doc["inputs"] = {
        "pred_dir": str(pred_dir),
        "gt_dir": str(gt_dir),
        "files": {name: file_sha256(gt_files[name]) for name in common},
    }
    doc["generator_version"] = __version__
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(report.table())
    return EXIT_OK


def _cmd_select_checkpoint(args) -> int:
    trajectories = read_trajectories(args.trajectory)
    if args.run is not None:
        trajectories = [t for t in trajectories if t.run == args.run]
        if not trajectories:
            raise ConfigError(f"run {args.run} not present in {args.trajectory}")
    direction = "minimize" if args.minimize else "maximize"
    results = [
        {
            "run": t.run,
            "trajectory": str(args.trajectory),
            **select_best(t, args.metric, direction).to_dict(),
        }
        for t in trajectories
    ]
    payload = results[0] if len(results) == 1 else results
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK


def _cmd_simulate_study(args) -> int:
    cfg = load_config(args.config)
    study_cfg: StudyConfig = cfg.study_config(seed=args.seed, trials=args.trials)
    result = simulate_selection_study(study_cfg)
    Path(args.out).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    for arm in sorted(result.regrets):
        print(
            f"n_val={arm}: median regret {result.median(arm):.5f}, "
            f"zero-regret fraction {result.zero_fraction(arm):.2f}"
        )
    return EXIT_OK


def _cmd_report(args) -> int:
    from . import report as report_mod

    out_dir = Path(args.out_dir)
    written: list[Path] = []
    if args.trajectory:
        trajectories = read_trajectories(args.trajectory)
        written += report_mod.render_trajectories(trajectories, args.metric, out_dir)
    if args.study:
        study = json.loads(Path(args.study).read_text())
        written += report_mod.render_study(study, out_dir)
    if args.eval:
        eval_doc = json.loads(Path(args.eval).read_text())
        written += report_mod.render_eval(eval_doc, out_dir)
    if not written:
        raise ConfigError("report needs at least one of --trajectory, --study, --eval")
    for p in written:
        print(p)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctsynth",
        description="Synthetic liver-tumor generation, validation sets, metrics, "
        "and checkpoint selection.",
    )
    parser.add_argument("--version", action="version", version=f"ctsynth {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clip (and optionally normalize) a CT volume")
    p.add_argument("--volume", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("vessels", help="segment intrahepatic vessels by thresholding")
    p.add_argument("--volume", required=True)
    p.add_argument("--liver", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vessels)

    p = sub.add_parser("shapes", help="render a gallery of deformed tumor shapes")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--size-class", default="mix")
    p.add_argument("--spacing", type=float, default=1.0, help="isotropic mm per voxel")
    p.add_argument("--montage", action="store_true", help="also write montage.png")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_shapes)

    p = sub.add_parser("textures", help="render texture blocks")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--dims", default="64,64,64")
    p.add_argument("--mu", type=float, default=45.0)
    p.add_argument("--sigma-g", type=float, default=10.0)
    p.add_argument("--montage", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_textures)

    p = sub.add_parser("synth", help="synthesize tumor(s) into one host volume")
    p.add_argument("--volume", required=True)
    p.add_argument("--liver", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size-class", default="mix")
    p.add_argument("--num-tumors", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser(
        "make-validation", help="offline validation set: one tumor per (host, class)"
    )
    p.add_argument("--pool", required=True, help="pool.json listing volume/liver pairs")
    p.add_argument("--classes", default="small,medium,large")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_make_validation)

    p = sub.add_parser("stream", help="materialize continual-training stream items")
    p.add_argument("--pool", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_stream)

    p = sub.add_parser("evaluate", help="DSC + per-lesion sensitivity over mask pairs")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("select-checkpoint", help="best epoch from a trajectory JSONL")
    p.add_argument("trajectory")
    p.add_argument("--metric", default="dsc")
    p.add_argument("--minimize", action="store_true")
    p.add_argument("--run", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_select_checkpoint)

    p = sub.add_parser("simulate-study", help="validation-size regret simulation")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate_study)

    p = sub.add_parser("report", help="render figures + CSV from JSON artifacts")
    p.add_argument("--trajectory", default=None)
    p.add_argument("--metric", default="dsc")
    p.add_argument("--study", default=None)
    p.add_argument("--eval", dest="eval", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CtSynthError as exc:
        return _fail(exc.category, str(exc))
    except FileNotFoundError as exc:
        return _fail("io", str(exc))
    except (ValueError, KeyError) as exc:
        return _fail("data", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())

"""Operator surface: dataset prep, super-resolution, evaluation, export,
fine-tuning, and micro-benchmarking.

Every command assembles one run manifest (command, config snapshot, paths,
timing, metrics, per-file errors) and can write it as JSON via --json. Exit
code is 0 iff no per-file errors occurred. AUTOLUT_THREADS caps worker
counts for per-image and tiled parallelism.
"""

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import backbone, finetune as ft, pipeline, planes
from ._kernels import kernel_name
from .errors import AutoLutError, InvalidDatasetError

IMAGE_SUFFIXES = (".png",)


def _emit_manifest(manifest: dict, json_path):
    if json_path:
        Path(json_path).write_text(json.dumps(manifest, indent=1))


def _list_images(directory) -> list:
    d = Path(directory)
    if not d.is_dir():
        raise InvalidDatasetError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _load_pipeline_arg(args) -> pipeline.PipelineConfig:
    ensemble = not getattr(args, "no_ensemble", False)
    if getattr(args, "pipeline", None):
        return pipeline.load_pipeline(args.pipeline, ensemble=ensemble)
    return pipeline.preset_config(args.preset, scale=args.scale, ensemble=ensemble)


def _to_y(image: np.ndarray) -> np.ndarray:
    return planes.rgb_to_y(image) if image.ndim == 3 else image


def _mod_crop(image: np.ndarray, scale: int) -> np.ndarray:
    h = image.shape[0] - image.shape[0] % scale
    w = image.shape[1] - image.shape[1] % scale
    return image[:h, :w]


def cmd_downsample(args) -> int:
    files = _list_images(args.in_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    errors = []
    records = []

    def one(path):
        img = planes.load_png(path)
        img = _mod_crop(img, args.scale)
        lr = planes.resize_rgb(img, img.shape[0] // args.scale,
                               img.shape[1] // args.scale, kernel="bicubic")
        planes.save_png(out_dir / path.name, lr)
        return {"image": path.name, "hr_dims": list(img.shape[:2]),
                "lr_dims": list(lr.shape[:2])}

    with ThreadPoolExecutor(max_workers=pipeline.resolve_threads()) as pool:
        futures = {pool.submit(one, p): p for p in files}
        for fut, p in futures.items():
            try:
                records.append(fut.result())
            except Exception as e:  # per-file: report, continue
                errors.append({"image": p.name, "error": str(e)})
                print(f"error: {p.name}: {e}", file=sys.stderr)

    manifest = {
        "command": "downsample",
        "config": {"scale": args.scale, "in": str(args.in_dir), "out": str(args.out_dir)},
        "records": sorted(records, key=lambda r: r["image"]),
        "errors": errors,
    }
    _emit_manifest(manifest, args.json)
    print(f"downsampled {len(records)} images to {out_dir} ({len(errors)} errors)")
    return 1 if errors else 0


def cmd_sr(args) -> int:
    cfg = _load_pipeline_arg(args)
    img = planes.load_png(args.input)
    y = _to_y(img)
    t0 = time.perf_counter()
    out = pipeline.super_resolve(y, cfg)
    elapsed = time.perf_counter() - t0
    planes.save_png(args.output, out)
    manifest = {
        "command": "sr",
        "config": _config_snapshot(args, cfg),
        "input": str(args.input),
        "output": str(args.output),
        "in_dims": list(y.shape),
        "out_dims": list(out.shape),
        "seconds": elapsed,
        "errors": [],
    }
    _emit_manifest(manifest, args.json)
    print(f"{args.input} {y.shape} -> {args.output} {out.shape} in {elapsed:.3f}s")
    return 0


def _config_snapshot(args, cfg: pipeline.PipelineConfig) -> dict:
    return {
        "preset": getattr(args, "preset", None),
        "pipeline": str(getattr(args, "pipeline", None) or ""),
        "scale": cfg.scale,
        "ensemble": cfg.ensemble,
        "groups": [{"branches": len(g.branches), "k": g.k,
                    "out_channels": g.out_channels} for g in cfg.groups],
        "kernel": kernel_name(),
        "threads": pipeline.resolve_threads(),
    }


def _pair_datasets(lr_dir, hr_dir):
    lr_files = _list_images(lr_dir)
    hr_files = _list_images(hr_dir)
    lr_names = [p.stem for p in lr_files]
    hr_names = [p.stem for p in hr_files]
    if lr_names != hr_names:
        raise InvalidDatasetError(
            f"LR/HR name mismatch: {sorted(set(lr_names) ^ set(hr_names))}")
    return list(zip(lr_files, hr_files))


def cmd_eval(args) -> int:
    pairs = _pair_datasets(args.lr_dir, args.hr_dir)
    dataset = Path(args.hr_dir).name
    cfg = None if args.baseline else _load_pipeline_arg(args)
    errors = []
    records = []

    def one(lr_path, hr_path):
        hr = _mod_crop(planes.load_png(hr_path), args.scale)
        lr = planes.load_png(lr_path)
        want_dims = (hr.shape[0] // args.scale, hr.shape[1] // args.scale)
        if lr.shape[:2] != want_dims:
            raise InvalidDatasetError(
                f"LR dims {lr.shape[:2]} != HR/scale {want_dims}")
        if args.baseline:
            up = planes.resize_rgb(lr, hr.shape[0], hr.shape[1], kernel=args.baseline)
            sr_y = _to_y(up)
        else:
            sr_y = pipeline.super_resolve(_to_y(lr), cfg)
        hr_y = _to_y(hr)
        return {
            "dataset": dataset,
            "image": lr_path.stem,
            "psnr_db": planes.psnr(sr_y, hr_y, border_crop=args.scale),
            "ssim": planes.ssim(sr_y, hr_y, border_crop=args.scale),
        }

    with ThreadPoolExecutor(max_workers=pipeline.resolve_threads()) as pool:
        futures = {pool.submit(one, lr, hr): lr for lr, hr in pairs}
        for fut, lr in futures.items():
            try:
                records.append(fut.result())
            except Exception as e:
                errors.append({"image": lr.name, "error": str(e)})
                print(f"error: {lr.name}: {e}", file=sys.stderr)

    records.sort(key=lambda r: r["image"])
    mean_psnr = float(np.mean([r["psnr_db"] for r in records])) if records else float("nan")
    mean_ssim = float(np.mean([r["ssim"] for r in records])) if records else float("nan")
    method = args.baseline or args.preset or str(args.pipeline)

    width = max((len(r["image"]) for r in records), default=8)
    print(f"{'image':<{width}}  {'psnr_db':>8}  {'ssim':>7}")
    for r in records:
        print(f"{r['image']:<{width}}  {r['psnr_db']:8.2f}  {r['ssim']:7.4f}")
    print(f"{'mean':<{width}}  {mean_psnr:8.2f}  {mean_ssim:7.4f}")

    manifest = {
        "command": "eval",
        "method": method,
        "config": _config_snapshot(args, cfg) if cfg else {"baseline": args.baseline,
                                                           "scale": args.scale},
        "records": records,
        "mean": {"psnr_db": mean_psnr, "ssim": mean_ssim},
        "errors": errors,
    }
    _emit_manifest(manifest, args.json)
    return 1 if errors else 0


def cmd_export(args) -> int:
    ckpt = backbone.load_checkpoint(args.checkpoint)
    t0 = time.perf_counter()
    cfg = backbone.export_pipeline(ckpt)
    elapsed = time.perf_counter() - t0
    pipeline.save_pipeline(args.out, cfg)
    sizes = backbone.storage_size(cfg)
    manifest = {
        "command": "export",
        "checkpoint": str(args.checkpoint),
        "out": str(args.out),
        "seconds": elapsed,
        "storage": sizes,
        "errors": [],
    }
    _emit_manifest(manifest, args.json)
    print(f"exported {args.checkpoint} -> {args.out} "
          f"({sizes['total'] / 2**20:.3f} MiB) in {elapsed:.2f}s")
    return 0


def _load_ft_dataset(data_dir, scale):
    pairs = []
    for path in _list_images(data_dir):
        hr = _mod_crop(_to_y(planes.load_png(path)), scale)
        lr = planes.resize(hr, hr.shape[0] // scale, hr.shape[1] // scale,
                           kernel="bicubic")
        pairs.append((lr, hr))
    return pairs


def cmd_finetune(args) -> int:
    cfg = pipeline.load_pipeline(args.pipeline)
    pairs = _load_ft_dataset(args.data, cfg.scale)
    ft_cfg = ft.FinetuneConfig(learning_rate=args.lr, batch_size=args.batch_size,
                               patch_size=args.patch_size, steps=args.steps,
                               seed=args.seed)
    t0 = time.perf_counter()
    updated, curve = ft.finetune(cfg, pairs, ft_cfg)
    elapsed = time.perf_counter() - t0
    pipeline.save_pipeline(args.out, updated)
    manifest = {
        "command": "finetune",
        "config": {"pipeline": str(args.pipeline), "data": str(args.data),
                   "steps": args.steps, "lr": args.lr, "seed": args.seed,
                   "batch_size": args.batch_size, "patch_size": args.patch_size,
                   "scale": cfg.scale},
        "out": str(args.out),
        "seconds": elapsed,
        "loss_curve": curve,
        "errors": [],
    }
    _emit_manifest(manifest, args.json)
    first = curve[0] if curve else float("nan")
    last = curve[-1] if curve else float("nan")
    print(f"finetuned {args.steps} steps on {len(pairs)} images: "
          f"loss {first:.5f} -> {last:.5f} in {elapsed:.1f}s")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_pipeline_arg(args)
    rng = np.random.default_rng(args.seed)
    x = rng.integers(0, 256, (args.size, args.size)).astype(np.uint8)

    times = []
    stage_breakdown = []
    with _forced_kernel(args.kernel):
        pipeline.super_resolve(x, cfg)  # warmup
        for _ in range(args.iterations):
            stages = []
            t0 = time.perf_counter()
            pipeline.super_resolve(x, cfg, stage_times=stages)
            times.append(time.perf_counter() - t0)
            stage_breakdown.append(stages)
    times_ms = np.array(times) * 1e3
    per_stage_ms = (np.mean(stage_breakdown, axis=0) * 1e3).tolist()
    stats = {
        "mean_ms": float(times_ms.mean()),
        "p50_ms": float(np.percentile(times_ms, 50)),
        "p95_ms": float(np.percentile(times_ms, 95)),
        "per_stage_ms": per_stage_ms,
        "iterations": args.iterations,
        "image_dims": [args.size, args.size],
        "out_dims": [args.size * cfg.scale, args.size * cfg.scale],
        "kernel": args.kernel if args.kernel != "auto" else kernel_name(),
    }
    manifest = {
        "command": "bench",
        "config": _config_snapshot(args, cfg),
        "stats": stats,
        "errors": [],
    }
    _emit_manifest(manifest, args.json)
    print(f"{args.size}x{args.size} x{cfg.scale}: mean {stats['mean_ms']:.1f} ms  "
          f"p50 {stats['p50_ms']:.1f}  p95 {stats['p95_ms']:.1f}  "
          f"stages {[round(s, 1) for s in per_stage_ms]}  kernel {stats['kernel']}")
    return 0


class _forced_kernel:
    """Temporarily route run_group through a specific kernel implementation."""

    def __init__(self, which: str):
        self.which = which

    def __enter__(self):
        if self.which == "auto":
            return
        self._orig = pipeline._kernels.get_group_forward
        target = pipeline._kernels.get_group_forward(self.which)
        pipeline._kernels.get_group_forward = lambda kind="active": target

    def __exit__(self, *exc):
        if self.which != "auto":
            pipeline._kernels.get_group_forward = self._orig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autolut",
                                     description="LUT super-resolution engine")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--json", help="write the run manifest to this path")
        p.add_argument("--seed", type=int, default=0)

    def add_pipeline_source(p, need_scale=True):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--preset", choices=pipeline.preset_names())
        src.add_argument("--pipeline", help="pipeline container path")
        p.add_argument("--no-ensemble", action="store_true",
                       help="disable the rotation ensemble")
        if need_scale:
            p.add_argument("--scale", type=int, default=4,
                           help="upscale factor for presets")

    p = sub.add_parser("downsample", help="bicubic-downscale an HR dataset")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--scale", type=int, required=True)
    add_common(p)
    p.set_defaults(fn=cmd_downsample)

    p = sub.add_parser("sr", help="super-resolve one image (Y channel)")
    add_pipeline_source(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    add_common(p)
    p.set_defaults(fn=cmd_sr)

    p = sub.add_parser("eval", help="PSNR/SSIM over an LR/HR dataset")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--baseline", choices=["nearest", "bilinear", "bicubic"])
    grp.add_argument("--preset", choices=pipeline.preset_names())
    grp.add_argument("--pipeline")
    p.add_argument("--no-ensemble", action="store_true")
    p.add_argument("--lr", dest="lr_dir", required=True)
    p.add_argument("--hr", dest="hr_dir", required=True)
    p.add_argument("--scale", type=int, required=True)
    add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("export", help="materialize a checkpoint into tables")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("finetune", help="table-aware fine-tuning")
    p.add_argument("--pipeline", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--patch-size", type=int, default=48)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("bench", help="latency on a synthetic input")
    add_pipeline_source(p)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--kernel", choices=["auto", "python", "compiled"],
                   default="auto")
    add_common(p)
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except AutoLutError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Trainer CLI: fit a network and write the engine-consumable checkpoint."""

import argparse
import json
import re
import sys
import time
from pathlib import Path

from . import checkpoint
from .data import PatchDataset
from .train import build_net, train

PRESET_RE = re.compile(r"^mulut-ours-(\d+)x(\d+)$")


def parse_preset(name: str):
    """'mulut-ours-BxK' -> two groups of B branches with sample size K."""
    m = PRESET_RE.match(name)
    if not m:
        raise SystemExit(f"unknown preset {name!r} (expected mulut-ours-BxK)")
    b, k = int(m.group(1)), int(m.group(2))
    if k % 2 == 0 or b < 1:
        raise SystemExit(f"preset {name!r}: k must be odd, b >= 1")
    return [(b, k), (b, k)]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="autolut-train")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="train and emit a checkpoint directory")
    p.add_argument("--scale", type=int, default=4)
    p.add_argument("--preset", default="mulut-ours-3x5")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--patch-size", type=int, default=48)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--no-ensemble", action="store_true")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--json", help="write loss curve + summary JSON here")
    args = ap.parse_args(argv)

    groups_spec = parse_preset(args.preset)
    net = build_net(args.scale, groups_spec, args.hidden, args.depth, args.seed,
                    ensemble=not args.no_ensemble)
    dataset = PatchDataset(args.data, args.scale, args.patch_size)
    t0 = time.perf_counter()
    curve = train(net, dataset, steps=args.steps, lr=args.lr,
                  batch_size=args.batch_size, seed=args.seed)
    elapsed = time.perf_counter() - t0
    checkpoint.write(args.out, net.to_checkpoint())

    summary = {
        "command": "train",
        "config": {"scale": args.scale, "preset": args.preset,
                   "steps": args.steps, "seed": args.seed, "lr": args.lr,
                   "batch_size": args.batch_size, "patch_size": args.patch_size,
                   "hidden": args.hidden, "depth": args.depth},
        "out": str(args.out),
        "seconds": elapsed,
        "loss_curve": curve,
    }
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=1))
    first = curve[0] if curve else float("nan")
    last = curve[-1] if curve else float("nan")
    print(f"trained {args.steps} steps on {len(dataset.pairs)} images: "
          f"mse {first:.5f} -> {last:.5f} in {elapsed:.0f}s; checkpoint at {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Compare the compiled group kernel against the numpy fallback.

Runs the full pipeline on a synthetic plane with each kernel, checks the
outputs are byte-identical, and prints a latency table.

    python3 benchmarks/bench_kernels.py [--size 224] [--iterations 3]
"""

import argparse
import time

import numpy as np

from autolut import preset_config
from autolut._kernels import get_group_forward
from autolut.cli import _forced_kernel
from autolut.pipeline import super_resolve


def time_kernel(which, x, cfg, iterations):
    with _forced_kernel(which):
        out = super_resolve(x, cfg)  # warmup + correctness sample
        times = []
        for _ in range(iterations):
            t0 = time.perf_counter()
            super_resolve(x, cfg)
            times.append(time.perf_counter() - t0)
    return out, min(times) * 1e3, float(np.mean(times)) * 1e3


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=224)
    ap.add_argument("--iterations", type=int, default=3)
    ap.add_argument("--presets", nargs="*",
                    default=["mulut-ours-1x5", "mulut-ours-3x5", "spf-light"])
    args = ap.parse_args()

    try:
        get_group_forward("compiled")
    except ImportError:
        raise SystemExit("compiled kernel not built; run pip install -e . --no-build-isolation")

    rng = np.random.default_rng(0)
    x = rng.integers(0, 256, (args.size, args.size)).astype(np.uint8)
    print(f"{args.size}x{args.size} input, x4, {args.iterations} iterations")
    print(f"{'preset':<16} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}  identical")
    for preset in args.presets:
        cfg = preset_config(preset, scale=4)
        out_py, best_py, _ = time_kernel("python", x, cfg, args.iterations)
        out_c, best_c, _ = time_kernel("compiled", x, cfg, args.iterations)
        same = np.array_equal(out_py, out_c)
        print(f"{preset:<16} {best_py:10.1f} {best_c:12.1f} {best_py / best_c:8.2f}x  {same}")
        if not same:
            raise SystemExit(f"kernel outputs differ for {preset}")


if __name__ == "__main__":
    main()

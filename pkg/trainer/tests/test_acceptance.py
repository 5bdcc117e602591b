"""Secondary acceptance: cross-component consistency and smoke training.

Both criteria exercise the engine strictly through its external interfaces:
the checkpoint container and the `autolut` CLI (export / downsample /
finetune / eval / sr).
"""

import json
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from autolut_trainer import build_net
from autolut_trainer.checkpoint import write
from autolut_trainer.cli import main as trainer_main

from conftest import ENGINE_CLI, procedural_photo, requires_engine


def report(name, ok, detail=""):
    print(f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
          + (f"  ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def engine(*args):
    proc = subprocess.run([ENGINE_CLI, *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise AssertionError(f"engine {' '.join(args)} failed: {proc.stderr}")
    return proc


@requires_engine
def test_cross_component_consistency(tmp_path):
    net = build_net(4, [(1, 3), (1, 3)], hidden=32, depth=2, seed=5)
    ck = tmp_path / "ck"
    write(ck, net.to_checkpoint())
    pipe = tmp_path / "pipe.alsr"
    engine("export", "--checkpoint", str(ck), "--out", str(pipe))

    ref = net.double()
    rng = np.random.default_rng(0)
    inputs = [rng.integers(0, 256, (16, 16)).astype(np.uint8) for _ in range(50)]
    for i, x in enumerate(inputs):
        Image.fromarray(x).save(tmp_path / f"in{i}.png")

    def run_one(i):
        engine("sr", "--pipeline", str(pipe),
               "--input", str(tmp_path / f"in{i}.png"),
               "--output", str(tmp_path / f"out{i}.png"))
        got = np.asarray(Image.open(tmp_path / f"out{i}.png"), dtype=np.float64)
        want = ref.float_forward(inputs[i].astype(np.float64)).numpy()
        return float(np.abs(got - want).mean())

    with ThreadPoolExecutor(max_workers=2) as pool:
        diffs = list(pool.map(run_one, range(50)))
    mean_diff = float(np.mean(diffs))
    report("trainer float forward vs exported engine forward <= 2 levels "
           "(50 random 16x16 inputs)", mean_diff <= 2.0,
           f"mean abs diff {mean_diff:.3f}, worst image {max(diffs):.3f}")


@requires_engine
def test_smoke_training_and_finetuned_pipeline_beats_nearest(tmp_path):
    # one training image (a DIV2K stand-in; the real dataset is not
    # fetchable in this environment), x4, preset 1x3
    data = tmp_path / "hr"
    data.mkdir()
    Image.fromarray(procedural_photo(192, 192, seed=1)).save(data / "train.png")

    ck = tmp_path / "ck"
    jpath = tmp_path / "train.json"
    rc = trainer_main([
        "train", "--scale", "4", "--preset", "mulut-ours-1x3",
        "--data", str(data), "--steps", "2000", "--seed", "0",
        "--hidden", "32", "--depth", "2",
        "--out", str(ck), "--json", str(jpath)])
    assert rc == 0
    curve = json.loads(jpath.read_text())["loss_curve"]
    tail = float(np.mean(curve[-50:]))
    report("2000-step smoke training: MSE strictly below step 0",
           tail < curve[0] and min(curve) < curve[0],
           f"step0 {curve[0]:.4f} -> tail {tail:.4f}")

    pipe = tmp_path / "pipe.alsr"
    engine("export", "--checkpoint", str(ck), "--out", str(pipe))
    tuned = tmp_path / "tuned.alsr"
    engine("finetune", "--pipeline", str(pipe), "--data", str(data),
           "--steps", "500", "--lr", "1e-3", "--seed", "0",
           "--out", str(tuned))

    lr_dir = tmp_path / "lr"
    engine("downsample", "--in", str(data), "--out", str(lr_dir), "--scale", "4")
    je = tmp_path / "eval_tuned.json"
    engine("eval", "--pipeline", str(tuned), "--lr", str(lr_dir),
           "--hr", str(data), "--scale", "4", "--json", str(je))
    jn = tmp_path / "eval_nearest.json"
    engine("eval", "--baseline", "nearest", "--lr", str(lr_dir),
           "--hr", str(data), "--scale", "4", "--json", str(jn))
    psnr_tuned = json.loads(je.read_text())["mean"]["psnr_db"]
    psnr_nearest = json.loads(jn.read_text())["mean"]["psnr_db"]
    report("exported + 500-step fine-tuned pipeline beats nearest PSNR",
           psnr_tuned > psnr_nearest,
           f"tuned {psnr_tuned:.2f} dB vs nearest {psnr_nearest:.2f} dB")


if __name__ == "__main__":
    sys.exit(subprocess.call(["pytest", "-s", __file__]))

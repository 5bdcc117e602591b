import numpy as np
import torch

from autolut_trainer import PatchDataset, build_net, train
from autolut_trainer.checkpoint import write
from autolut_trainer.data import bicubic_down, load_y

from conftest import procedural_photo


def make_data_dir(tmp_path, n=2, size=128):
    from PIL import Image

    d = tmp_path / "data"
    d.mkdir()
    for i in range(n):
        Image.fromarray(procedural_photo(size, size, seed=i)).save(d / f"im{i}.png")
    return d


def test_zero_steps_checkpoint_equals_initialization(tmp_path):
    data = make_data_dir(tmp_path)
    ds = PatchDataset(data, scale=2, patch_size=24)
    net = build_net(2, [(1, 3), (1, 3)], hidden=8, depth=0, seed=7)
    init_dir = tmp_path / "init"
    write(init_dir, net.to_checkpoint())
    curve = train(net, ds, steps=0, seed=7, log_every=0)
    after_dir = tmp_path / "after"
    write(after_dir, net.to_checkpoint())
    assert curve == []
    assert (init_dir / "weights.bin").read_bytes() == (after_dir / "weights.bin").read_bytes()
    assert (init_dir / "manifest.json").read_bytes() == (after_dir / "manifest.json").read_bytes()


def test_short_training_descends_and_stays_feasible(tmp_path):
    data = make_data_dir(tmp_path)
    ds = PatchDataset(data, scale=4, patch_size=48)
    net = build_net(4, [(1, 3), (1, 3)], hidden=16, depth=1, seed=0)
    curve = train(net, ds, steps=80, batch_size=16, seed=0, log_every=0)
    assert np.mean(curve[-10:]) < 0.5 * np.mean(curve[:10])
    for g in net.groups:
        for br in g.branches:
            r = br.residual.detach().numpy()
            assert r.min() >= 0.0 and r.max() <= 1.0


def test_training_is_seed_deterministic(tmp_path):
    data = make_data_dir(tmp_path, n=1)
    curves = []
    for _ in range(2):
        ds = PatchDataset(data, scale=2, patch_size=24)
        net = build_net(2, [(1, 3), (1, 3)], hidden=8, depth=0, seed=5)
        curves.append(train(net, ds, steps=10, batch_size=4, seed=5, log_every=0))
    assert curves[0] == curves[1]


def test_dataset_degradation_properties(tmp_path):
    data = make_data_dir(tmp_path, n=1)
    hr = load_y(next(data.iterdir()))
    lr = bicubic_down(hr, 4)
    assert lr.shape == (hr.shape[0] // 4, hr.shape[1] // 4)
    const = np.full((64, 64), 77, dtype=np.uint8)
    assert np.all(bicubic_down(const, 4) == 77)

    ds = PatchDataset(data, scale=4, patch_size=48)
    rng = np.random.default_rng(0)
    lr_b, hr_b = ds.batch(rng, 4)
    assert lr_b.shape == (4, 12, 12)
    assert hr_b.shape == (4, 48, 48)

import numpy as np
import pytest

from autolut_trainer import build_net
from autolut_trainer.checkpoint import read, tensor_names, write


def test_roundtrip_byte_identical(tmp_path):
    net = build_net(2, [(2, 3), (2, 3)], hidden=8, depth=1, seed=3)
    a = tmp_path / "a"
    b = tmp_path / "b"
    write(a, net.to_checkpoint())
    write(b, read(a))
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert (a / "weights.bin").read_bytes() == (b / "weights.bin").read_bytes()


def test_tensor_directory_complete(tmp_path):
    net = build_net(4, [(1, 5), (1, 5)], hidden=8, depth=0, seed=0)
    ckpt = net.to_checkpoint()
    names = [n for n, _ in tensor_names(ckpt.groups)]
    assert len(names) == len(set(names))
    assert set(names) == set(ckpt.tensors)
    assert "g0.b0.sampler_curr" in names
    assert "g1.b0.backbone.1.bias" in names
    # final group emits scale^2 channels
    assert ckpt.groups[-1].out_channels == 16


def test_shape_mismatch_rejected(tmp_path):
    net = build_net(2, [(1, 3), (1, 3)], hidden=8, depth=0, seed=0)
    ckpt = net.to_checkpoint()
    bad = dict(ckpt.tensors)
    bad["g0.b0.residual"] = np.zeros((3, 3), dtype=np.float32)
    from autolut_trainer.checkpoint import TrainerCheckpoint

    broken = TrainerCheckpoint(ckpt.scale, ckpt.ensemble, ckpt.groups, bad)
    with pytest.raises(ValueError):
        write(tmp_path, broken)


def test_write_is_atomic_over_existing(tmp_path):
    net1 = build_net(2, [(1, 3), (1, 3)], hidden=8, depth=0, seed=1)
    net2 = build_net(2, [(1, 3), (1, 3)], hidden=8, depth=0, seed=2)
    write(tmp_path, net1.to_checkpoint())
    first = (tmp_path / "weights.bin").read_bytes()
    write(tmp_path, net2.to_checkpoint())
    second = (tmp_path / "weights.bin").read_bytes()
    assert first != second
    assert not list(tmp_path.glob("weights.bin.*"))  # no temp files left

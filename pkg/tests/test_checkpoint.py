import hashlib
import struct

import numpy as np
import pytest
import torch

from monostereo.checkpoint import (CheckpointError, MAGIC, file_checksum,
                                   load_model, load_optimizer_state,
                                   read_tensors, save_model, write_tensors)
from monostereo.denoiser import ConditionalDenoiser, DenoiserConfig

TINY = DenoiserConfig(target_channels=1, cond_channels=1, widths=(4, 4),
                      time_dim=4, groups=2)


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "weight": rng.standard_normal((3, 4, 5)).astype(np.float32),
        "bias": rng.standard_normal(7).astype(np.float32),
        "scalar": np.float32(2.5).reshape(()),
    }
    p = tmp_path / "t.ckpt"
    write_tensors(p, tensors)
    back = read_tensors(p)
    assert set(back) == set(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
        assert back[k].shape == np.asarray(tensors[k]).shape


def test_file_layout(tmp_path):
    p = tmp_path / "t.ckpt"
    write_tensors(p, {"a": np.zeros(2, np.float32)})
    blob = p.read_bytes()
    assert blob[:4] == MAGIC == b"E2E1"
    version, count = struct.unpack_from("<II", blob, 4)
    assert version == 1 and count == 1
    # trailing u64 checksum = first 8 bytes of sha256 of the body
    body, trailer = blob[:-8], blob[-8:]
    assert trailer == hashlib.sha256(body).digest()[:8]


def test_writes_are_byte_identical(tmp_path):
    tensors = {"b": np.ones(3, np.float32), "a": np.zeros((2, 2), np.float32)}
    p1, p2 = tmp_path / "x1.ckpt", tmp_path / "x2.ckpt"
    write_tensors(p1, tensors)
    write_tensors(p2, dict(reversed(tensors.items())))  # insertion order differs
    assert p1.read_bytes() == p2.read_bytes()


def test_corruption_detected(tmp_path):
    p = tmp_path / "t.ckpt"
    write_tensors(p, {"a": np.arange(8, dtype=np.float32)})
    blob = bytearray(p.read_bytes())
    blob[30] ^= 0xFF
    p.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        read_tensors(p)


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "t.ckpt"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        read_tensors(p)


def test_truncation_rejected(tmp_path):
    p = tmp_path / "t.ckpt"
    write_tensors(p, {"a": np.arange(64, dtype=np.float32)})
    p.write_bytes(p.read_bytes()[:40])
    with pytest.raises(CheckpointError):
        read_tensors(p)


def test_save_load_model_round_trip(tmp_path):
    torch.manual_seed(0)
    model = ConditionalDenoiser(TINY)
    p = tmp_path / "m.ckpt"
    save_model(p, model, train_config={"seed": 1, "steps": 10})
    back, meta = load_model(p)
    assert meta["train_config"]["steps"] == 10
    assert meta["arch_hash"] == TINY.arch_hash()
    for (ka, va), (kb, vb) in zip(model.state_dict().items(),
                                  back.state_dict().items()):
        assert ka == kb
        assert torch.equal(va, vb)


def test_load_model_arch_hash_mismatch(tmp_path):
    model = ConditionalDenoiser(TINY)
    p = tmp_path / "m.ckpt"
    save_model(p, model)
    with pytest.raises(CheckpointError, match="architecture"):
        load_model(p, expect_arch_hash=DenoiserConfig().arch_hash())


def test_optimizer_state_round_trip(tmp_path):
    torch.manual_seed(1)
    model = ConditionalDenoiser(TINY)
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    x = torch.randn(1, 2, 8, 8)
    loss = model(x, torch.tensor([1.0])).sum() + sum(
        p.sum() for p in model.parameters())
    loss.backward()
    opt.step()
    p = tmp_path / "m.ckpt"
    save_model(p, model, optimizer=opt)

    model2 = ConditionalDenoiser(TINY)
    opt2 = torch.optim.Adam(model2.parameters(), lr=1e-3)
    assert load_optimizer_state(p, opt2)
    s1 = opt.state_dict()["state"]
    s2 = opt2.state_dict()["state"]
    assert set(s1) == set(s2)
    for pid in s1:
        np.testing.assert_allclose(s1[pid]["exp_avg"].numpy(),
                                   s2[pid]["exp_avg"].numpy(), atol=1e-7)


def test_optimizer_state_absent_returns_false(tmp_path):
    model = ConditionalDenoiser(TINY)
    p = tmp_path / "m.ckpt"
    save_model(p, model)
    opt = torch.optim.Adam(model.parameters())
    assert not load_optimizer_state(p, opt)


def test_file_checksum_changes_with_content(tmp_path):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    write_tensors(p1, {"a": np.zeros(4, np.float32)})
    write_tensors(p2, {"a": np.ones(4, np.float32)})
    assert file_checksum(p1) != file_checksum(p2)
    assert len(file_checksum(p1)) == 64

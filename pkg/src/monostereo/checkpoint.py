"""Bit-exact binary checkpoint format for denoiser weights.

Layout (all little-endian):
  magic "E2E1" | u32 format version | u32 tensor count
  per tensor: u16 name length | UTF-8 name | u8 rank | rank x u32 dims
              | float32 payload
  trailer: u64 content checksum (first 8 bytes of the SHA-256 of every
  preceding byte, interpreted little-endian)

Tensors are written in sorted-name order, so identical contents yield
identical files. Model/optimizer metadata travels as a "__meta__" tensor
holding UTF-8 JSON bytes widened to float32.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .denoiser import ConditionalDenoiser, DenoiserConfig

MAGIC = b"E2E1"
VERSION = 1
META_TENSOR = "__meta__"


class CheckpointError(ValueError):
    pass


def _checksum(blob: bytes) -> int:
    return struct.unpack("<Q", hashlib.sha256(blob).digest()[:8])[0]


def write_tensors(path, tensors: dict) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        # np.asarray with order="C" keeps rank-0 tensors rank 0
        arr = np.asarray(tensors[name], dtype="<f4", order="C")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    blob = b"".join(parts)
    blob += struct.pack("<Q", _checksum(blob))
    Path(path).write_bytes(blob)


def read_tensors(path) -> dict:
    blob = Path(path).read_bytes()
    if len(blob) < 20 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    body, trailer = blob[:-8], blob[-8:]
    if struct.unpack("<Q", trailer)[0] != _checksum(body):
        raise CheckpointError(f"{path}: checksum mismatch, file corrupted")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = 12
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", body, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}I", body, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(body, dtype="<f4", count=n, offset=off)
        off += 4 * n
        tensors[name] = arr.reshape(dims).copy()
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return tensors


def _meta_to_tensor(meta: dict) -> np.ndarray:
    raw = json.dumps(meta, sort_keys=True).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float32)


def _meta_from_tensor(arr: np.ndarray) -> dict:
    return json.loads(bytes(np.round(arr).astype(np.uint8)).decode("utf-8"))


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_model(path, model: ConditionalDenoiser, train_config: dict = None,
               optimizer: torch.optim.Optimizer = None) -> None:
    tensors = {f"model.{k}": v.detach().cpu().numpy()
               for k, v in model.state_dict().items()}
    if optimizer is not None:
        state = optimizer.state_dict()["state"]
        for pid, entry in state.items():
            for key, val in entry.items():
                if isinstance(val, torch.Tensor):
                    tensors[f"opt.{pid}.{key}"] = val.detach().cpu().numpy()
                else:
                    tensors[f"opt.{pid}.{key}"] = np.asarray([float(val)])
    meta = {
        "arch": {
            "target_channels": model.config.target_channels,
            "cond_channels": model.config.cond_channels,
            "widths": list(model.config.widths),
            "time_dim": model.config.time_dim,
            "groups": model.config.groups,
        },
        "arch_hash": model.config.arch_hash(),
        "train_config": train_config or {},
    }
    tensors[META_TENSOR] = _meta_to_tensor(meta)
    write_tensors(path, tensors)


def load_model(path, expect_arch_hash: str = None):
    """Returns (model, meta). Raises CheckpointError on hash mismatch."""
    tensors = read_tensors(path)
    if META_TENSOR not in tensors:
        raise CheckpointError(f"{path}: missing metadata tensor")
    meta = _meta_from_tensor(tensors[META_TENSOR])
    arch = meta["arch"]
    config = DenoiserConfig(
        target_channels=int(arch["target_channels"]),
        cond_channels=int(arch["cond_channels"]),
        widths=tuple(arch["widths"]),
        time_dim=int(arch["time_dim"]),
        groups=int(arch["groups"]),
    )
    if config.arch_hash() != meta["arch_hash"]:
        raise CheckpointError(f"{path}: architecture hash mismatch")
    if expect_arch_hash is not None and meta["arch_hash"] != expect_arch_hash:
        raise CheckpointError(
            f"{path}: checkpoint architecture {meta['arch_hash']} does not "
            f"match expected {expect_arch_hash}")
    model = ConditionalDenoiser(config)
    state = {k[len("model."):]: torch.from_numpy(v)
             for k, v in tensors.items() if k.startswith("model.")}
    model.load_state_dict(state)
    model.eval()
    return model, meta


def load_optimizer_state(path, optimizer: torch.optim.Optimizer) -> bool:
    """Restore serialized moment estimates; returns False when absent."""
    tensors = read_tensors(path)
    opt_keys = [k for k in tensors if k.startswith("opt.")]
    if not opt_keys:
        return False
    state = {}
    for key in opt_keys:
        _, pid, field = key.split(".", 2)
        entry = state.setdefault(int(pid), {})
        if field == "step":
            entry[field] = torch.tensor(float(np.ravel(tensors[key])[0]))
        else:
            entry[field] = torch.from_numpy(tensors[key])
    sd = optimizer.state_dict()
    sd["state"] = state
    optimizer.load_state_dict(sd)
    return True

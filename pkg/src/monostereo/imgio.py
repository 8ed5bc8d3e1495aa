"""File I/O for frames: sRGB PNG and raw float32 formats.

Color frames live in linear intensity internally; 8-bit PNG is the only
place the sRGB transfer curve is applied. Single-channel frames (masks,
alpha supports) are stored without a transfer curve, scaled to [0, 255].
Raw export is little-endian float32, row-major, with a text sidecar
`<path>.meta` holding "width height channels".
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .frames import Video, as_frame


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Linear [0,1] -> sRGB [0,1] via the standard piecewise curve."""
    l = np.clip(linear, 0.0, 1.0)
    return np.where(l <= 0.0031308, 12.92 * l, 1.055 * np.power(l, 1 / 2.4) - 0.055)


def srgb_decode(srgb: np.ndarray) -> np.ndarray:
    s = np.clip(srgb, 0.0, 1.0)
    return np.where(s <= 0.04045, s / 12.92, np.power((s + 0.055) / 1.055, 2.4))


def save_png(frame: np.ndarray, path) -> None:
    frame = as_frame(frame)
    if frame.shape[2] == 3:
        data = srgb_encode(frame)
    elif frame.shape[2] == 1:
        data = np.clip(frame[:, :, 0], 0.0, 1.0)
    else:
        raise ValueError(f"cannot write {frame.shape[2]}-channel PNG")
    u8 = np.round(data * 255.0).astype(np.uint8)
    Image.fromarray(u8).save(str(path), format="PNG")


def load_png(path) -> np.ndarray:
    img = Image.open(str(path))
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    u8 = np.asarray(img, dtype=np.float32) / 255.0
    if u8.ndim == 2:
        return as_frame(u8)
    return as_frame(srgb_decode(u8))


def save_raw(frame: np.ndarray, path) -> None:
    frame = as_frame(frame)
    path = Path(path)
    frame.astype("<f4").tofile(path)
    h, w, c = frame.shape
    path.with_suffix(path.suffix + ".meta").write_text(f"{w} {h} {c}\n")


def load_raw(path) -> np.ndarray:
    path = Path(path)
    meta = path.with_suffix(path.suffix + ".meta").read_text().split()
    w, h, c = (int(v) for v in meta[:3])
    data = np.fromfile(path, dtype="<f4")
    if data.size != w * h * c:
        raise ValueError(f"raw file {path} has {data.size} values, expected {w*h*c}")
    return as_frame(data.reshape(h, w, c))


_FRAME_RE = re.compile(r"(\d+)\.png$")


def save_video_png(video: Video, out_dir, prefix="frame") -> list:
    """Write a video as <prefix>_%04d.png; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, frame in enumerate(video.frames):
        p = out_dir / f"{prefix}_{k:04d}.png"
        save_png(frame, p)
        paths.append(p)
    return paths


def load_video_png(dir_path, prefix=None, fps=16.0) -> Video:
    """Load a PNG sequence (sorted by the numeric suffix) as a video."""
    dir_path = Path(dir_path)
    files = [p for p in dir_path.iterdir() if _FRAME_RE.search(p.name)]
    if prefix is not None:
        files = [p for p in files if p.name.startswith(prefix)]
    if not files:
        raise FileNotFoundError(f"no PNG frames found in {dir_path}")
    files.sort(key=lambda p: (int(_FRAME_RE.search(p.name).group(1)), p.name))
    return Video(np.stack([load_png(p) for p in files]), fps=fps)

"""Raster types and resampling primitives.

A frame is a float32 numpy array of shape (H, W, C) holding linear
intensities; color frames use C=3 with values in [0, 1], single-channel
frames (masks, disparity) use C=1 and may hold arbitrary finite values.
Videos stack frames along a leading time axis. All operations here are
pure functions; frames are treated as immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def as_frame(data, channels=None) -> np.ndarray:
    """Coerce an array to a valid (H, W, C) float32 frame.

    2D input gets a trailing singleton channel axis. Raises ValueError on
    non-finite values or a channel mismatch.
    """
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"frame must be (H, W, C), got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"frame must be non-empty, got shape {a.shape}")
    if channels is not None and a.shape[2] != channels:
        raise ValueError(f"expected {channels} channels, got {a.shape[2]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("frame contains NaN/Inf values")
    return a


@dataclass(frozen=True)
class Video:
    """Ordered stack of equally sized frames, (T, H, W, C) float32."""

    frames: np.ndarray
    fps: float = 16.0

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float32)
        if f.ndim != 4 or f.shape[0] < 1:
            raise ValueError(f"video must be (T, H, W, C) with T >= 1, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("video contains NaN/Inf values")
        object.__setattr__(self, "frames", f)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    @property
    def channels(self):
        return self.frames.shape[3]


@dataclass(frozen=True)
class StereoPair:
    """A left/right video pair with matching geometry."""

    left: Video
    right: Video

    def __post_init__(self):
        if self.left.frames.shape != self.right.frames.shape:
            raise ValueError(
                f"left/right shape mismatch: {self.left.frames.shape} vs "
                f"{self.right.frames.shape}"
            )


def bilinear_sample(frame: np.ndarray, x, y) -> np.ndarray:
    """Sample a frame at continuous pixel coordinates.

    `x` and `y` may be scalars or broadcastable arrays; coordinates outside
    [0, W-1] x [0, H-1] clamp to the border. Returns an array with the
    coordinate shape plus a trailing channel axis.
    """
    h, w = frame.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = frame[y0, x0] * (1.0 - fx) + frame[y0, x1] * fx
    bot = frame[y1, x0] * (1.0 - fx) + frame[y1, x1] * fx
    return (top * (1.0 - fy) + bot * fy).astype(np.float32)


def resize_bilinear(frame: np.ndarray, new_width: int, new_height: int) -> np.ndarray:
    """Resize with half-pixel-center bilinear sampling.

    Resizing to the current dimensions returns a bit-identical copy.
    """
    if new_width < 1 or new_height < 1:
        raise ValueError("target dimensions must be >= 1")
    h, w = frame.shape[:2]
    if (new_width, new_height) == (w, h):
        return frame.copy()
    sx = w / new_width
    sy = h / new_height
    xs = (np.arange(new_width) + 0.5) * sx - 0.5
    ys = (np.arange(new_height) + 0.5) * sy - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return bilinear_sample(frame, gx, gy)


def crop(frame: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    """Extract the axis-aligned rectangle [x0, x0+w) x [y0, y0+h)."""
    fh, fw = frame.shape[:2]
    if w < 1 or h < 1:
        raise ValueError("crop size must be >= 1")
    if x0 < 0 or y0 < 0 or x0 + w > fw or y0 + h > fh:
        raise ValueError(
            f"crop ({x0},{y0},{w},{h}) exceeds frame bounds {fw}x{fh}"
        )
    return frame[y0 : y0 + h, x0 : x0 + w].copy()


def to_anaglyph(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Red-cyan anaglyph: red channel from the left view, G/B from the right."""
    if left.shape != right.shape or left.shape[2] != 3:
        raise ValueError("anaglyph requires matching 3-channel frames")
    out = right.copy()
    out[:, :, 0] = left[:, :, 0]
    return out


def video_map(video: Video, fn) -> Video:
    """Apply a frame function across a video, keeping fps metadata."""
    return Video(np.stack([fn(f) for f in video.frames]), fps=video.fps)


def resize_video(video: Video, new_width: int, new_height: int) -> Video:
    return video_map(video, lambda f: resize_bilinear(f, new_width, new_height))

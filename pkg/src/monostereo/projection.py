"""Equirectangular (VR180) to rectified perspective projection.

The hemisphere is parameterized by longitude/latitude in
[-pi/2, pi/2] x [-pi/2, pi/2], mapped linearly onto the source raster.
Both eyes of a VR180 pair are projected with identical forward-facing
intrinsics, so the output pair is rectified by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import as_frame, bilinear_sample

DEFAULT_FOV_DEG = 75.0
DEFAULT_SIZE = 512


@dataclass(frozen=True)
class PerspectiveIntrinsics:
    width: int
    height: int
    horizontal_fov: float  # radians
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        if not 0 < self.horizontal_fov < math.pi:
            raise ValueError("horizontal_fov must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(self.horizontal_fov / 2.0)


def _rotation(intr: PerspectiveIntrinsics) -> np.ndarray:
    cy, sy = math.cos(intr.yaw), math.sin(intr.yaw)
    cp, sp = math.cos(intr.pitch), math.sin(intr.pitch)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, sp], [0, -sp, cp]])
    return ry @ rx


def pixel_to_ray(intr: PerspectiveIntrinsics, u, v) -> np.ndarray:
    """Unit world-space direction for pixel (u, v); +z forward, y up.

    The principal pixel maps exactly to the (yaw, pitch) direction.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cx = (intr.width - 1) / 2.0
    cy = (intr.height - 1) / 2.0
    f = intr.focal_px
    d = np.stack([(u - cx) / f, (cy - v) / f, np.ones_like(u)], axis=-1)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return d @ _rotation(intr).T


def ray_to_pixel(intr: PerspectiveIntrinsics, ray) -> np.ndarray:
    """Inverse of pixel_to_ray for rays in front of the camera."""
    ray = np.asarray(ray, dtype=np.float64)
    cam = ray @ _rotation(intr)
    cx = (intr.width - 1) / 2.0
    cy = (intr.height - 1) / 2.0
    f = intr.focal_px
    z = cam[..., 2]
    u = cx + f * cam[..., 0] / z
    v = cy - f * cam[..., 1] / z
    return np.stack([u, v], axis=-1)


def ray_to_lonlat(ray) -> np.ndarray:
    """Longitude (about the vertical axis) and latitude of unit rays."""
    ray = np.asarray(ray, dtype=np.float64)
    lon = np.arctan2(ray[..., 0], ray[..., 2])
    lat = np.arcsin(np.clip(ray[..., 1], -1.0, 1.0))
    return np.stack([lon, lat], axis=-1)


def lonlat_to_ray(lon, lat) -> np.ndarray:
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    return np.stack([np.cos(lat) * np.sin(lon), np.sin(lat),
                     np.cos(lat) * np.cos(lon)], axis=-1)


def lonlat_to_equirect_px(lon, lat, eq_width, eq_height) -> np.ndarray:
    """Map hemisphere lon/lat onto equirect raster coordinates."""
    x = (np.asarray(lon) + math.pi / 2) / math.pi * (eq_width - 1)
    y = (math.pi / 2 - np.asarray(lat)) / math.pi * (eq_height - 1)
    return np.stack([x, y], axis=-1)


def equirect_px_to_lonlat(x, y, eq_width, eq_height) -> np.ndarray:
    lon = np.asarray(x) / (eq_width - 1) * math.pi - math.pi / 2
    lat = math.pi / 2 - np.asarray(y) / (eq_height - 1) * math.pi
    return np.stack([lon, lat], axis=-1)


def equirect_to_perspective(src: np.ndarray, intr: PerspectiveIntrinsics):
    """Project a hemisphere raster to a perspective view.

    Returns (frame, coverage) where coverage is the fraction of output
    rays that left the hemisphere (those pixels are border-clamped).
    """
    src = as_frame(src)
    h, w = intr.height, intr.width
    gy, gx = np.mgrid[0:h, 0:w]
    rays = pixel_to_ray(intr, gx, gy)
    lonlat = ray_to_lonlat(rays)
    margin = 1e-9
    outside = ((np.abs(lonlat[..., 0]) > math.pi / 2 + margin)
               | (np.abs(lonlat[..., 1]) > math.pi / 2 + margin)
               | (rays[..., 2] <= 0))
    px = lonlat_to_equirect_px(lonlat[..., 0], lonlat[..., 1],
                               src.shape[1], src.shape[0])
    out = bilinear_sample(src, px[..., 0], px[..., 1])
    return out, float(outside.mean())

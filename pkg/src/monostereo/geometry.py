"""Rectified-stereo disparity relations, including per-layer disparity.

Sign convention used across the whole package: the input view is the
right eye; the left camera sits at +b along x, so a point at depth z
appears in the left image shifted rightward by d = f*b/z pixels
(u_left = u_right + d, d >= 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class CameraRig:
    """Rectified stereo rig: focal length in pixels and baseline in meters."""

    focal_px: float
    baseline_m: float
    width: int = 64
    height: int = 64

    def __post_init__(self):
        if self.focal_px <= 0 or self.baseline_m <= 0:
            raise ValueError("focal_px and baseline_m must be positive")


@dataclass(frozen=True)
class LayerDepths:
    surface_depth_m: float
    reflected_depth_m: Optional[float] = None

    def __post_init__(self):
        if self.surface_depth_m <= 0:
            raise ValueError("surface depth must be positive")
        if self.reflected_depth_m is not None and self.reflected_depth_m <= 0:
            raise ValueError("reflected depth must be positive")


def disparity_from_depth(rig: CameraRig, z: float) -> float:
    """d = f*b/z, in pixels."""
    if z <= 0:
        raise ValueError(f"depth must be positive, got {z}")
    return rig.focal_px * rig.baseline_m / z


def depth_from_disparity(rig: CameraRig, d: float) -> float:
    """Inverse of disparity_from_depth."""
    if d <= 0:
        raise ValueError(f"disparity must be positive, got {d}")
    return rig.focal_px * rig.baseline_m / d


def layered_disparities(rig: CameraRig, depths: LayerDepths):
    """(d_surface, d_reflection) for a specular surface; both from f*b/z.

    The reflection component is None when no reflected depth is given.
    """
    d_surface = disparity_from_depth(rig, depths.surface_depth_m)
    d_reflection = None
    if depths.reflected_depth_m is not None:
        d_reflection = disparity_from_depth(rig, depths.reflected_depth_m)
    return d_surface, d_reflection

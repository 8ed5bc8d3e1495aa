"""Forward softmax splatting, disocclusion masks, and mask morphology.

Forward splatting pushes each source pixel to x + d along its scanline
with a bilinear footprint, weighting colliding contributions by
exp(beta * d) so nearer content (larger disparity) wins. Accumulation
order is fixed, so results are bit-stable across runs.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_dilation, binary_opening

from .frames import as_frame, bilinear_sample

DEFAULT_BETA = 10.0
WEIGHT_EPS = 1e-4


def forward_splat_softmax(src: np.ndarray, disp: np.ndarray,
                          sharpness: float = DEFAULT_BETA):
    """Returns (warped, weight); weight is the pre-normalization sum."""
    src = as_frame(src)
    disp = as_frame(disp, channels=1)
    if src.shape[:2] != disp.shape[:2]:
        raise ValueError("src/disp shape mismatch")
    if sharpness <= 0:
        raise ValueError("sharpness must be positive")
    if not np.all(np.isfinite(disp)):
        raise ValueError("disparity contains non-finite values")

    h, w, c = src.shape
    d = disp[:, :, 0].astype(np.float64)
    # softmax weight, capped per pixel so the accumulated sum stays
    # within float32 range; a global rescale would instead push the
    # weight of unmoved content below the disocclusion threshold. Beyond
    # the cap colliding contributions average rather than hard-select,
    # which only matters when two sources both exceed it.
    wgt = np.exp(np.minimum(sharpness * d, 80.0))

    xt = np.arange(w)[None, :] + d
    x0 = np.floor(xt).astype(np.int64)
    frac = xt - x0

    acc = np.zeros((h, w, c), np.float64)
    acc_w = np.zeros((h, w), np.float64)
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    for xi, f in ((x0, 1.0 - frac), (x0 + 1, frac)):
        inb = (xi >= 0) & (xi < w) & (f > 0)
        r = rows[inb]
        x = xi[inb]
        ww = (wgt * f)[inb]
        np.add.at(acc_w, (r, x), ww)
        np.add.at(acc, (r, x), ww[:, None] * src[inb])

    covered = acc_w > WEIGHT_EPS
    warped = np.zeros((h, w, c), np.float64)
    warped[covered] = acc[covered] / acc_w[covered][:, None]
    return warped.astype(np.float32), acc_w.astype(np.float32)[:, :, None]


def disocclusion_from_weight(weight: np.ndarray,
                             eps: float = WEIGHT_EPS) -> np.ndarray:
    """Unmapped-pixel mask: 1 where splat weight fell below eps."""
    weight = as_frame(weight, channels=1)
    return (weight < eps).astype(np.float32)


def morph(mask: np.ndarray, op: str, radius: int) -> np.ndarray:
    """Binary open/dilate with a square structuring element."""
    mask = as_frame(mask, channels=1)
    if op not in ("open", "dilate"):
        raise ValueError(f"unknown morphology op {op!r}")
    if radius < 1:
        return mask.copy()
    binary = mask[:, :, 0] > 0.5
    elem = np.ones((2 * radius + 1, 2 * radius + 1), bool)
    if op == "open":
        out = binary_opening(binary, structure=elem)
    else:
        out = binary_dilation(binary, structure=elem)
    return out.astype(np.float32)[:, :, None]


def backward_warp(src: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """out(x, y) = src(x - disp(x, y), y), bilinear with border clamp."""
    src = as_frame(src)
    disp = as_frame(disp, channels=1)
    if src.shape[:2] != disp.shape[:2]:
        raise ValueError("src/disp shape mismatch")
    h, w = src.shape[:2]
    gy, gx = np.mgrid[0:h, 0:w]
    return bilinear_sample(src, gx - disp[:, :, 0], gy)

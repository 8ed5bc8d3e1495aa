"""Block-matching disparity, left-right consistency, and alignment fits.

Disparity maps are single-channel frames of horizontal shifts in pixels
under the package-wide convention: left-view content equals right-view
content shifted by +d (d >= 0 for content in front of infinity).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from .frames import StereoPair, as_frame, bilinear_sample


def _shift_columns(img: np.ndarray, d: int) -> np.ndarray:
    """shift(img, d)(x) = img(x - d), edge-clamped."""
    if d == 0:
        return img
    out = np.empty_like(img)
    if d > 0:
        out[:, d:] = img[:, :-d]
        out[:, :d] = img[:, :1]
    else:
        out[:, :d] = img[:, -d:]
        out[:, d:] = img[:, -1:]
    return out


def block_match_disparity(reference: np.ndarray, target: np.ndarray,
                          max_disp: int, patch: int = 7,
                          search=None) -> np.ndarray:
    """Per-pixel horizontal shift d with reference(x) ~ target(x - d).

    Minimizes patch SSD over integer shifts (ties toward the smaller
    shift), then refines with a parabolic fit through the neighboring
    costs. `search` overrides the default (0, max_disp) integer range;
    negative bounds give signed matching for right-to-left maps.
    """
    reference = as_frame(reference)
    target = as_frame(target)
    if reference.shape != target.shape:
        raise ValueError("reference/target shape mismatch")
    if patch < 3 or patch % 2 == 0:
        raise ValueError("patch must be odd and >= 3")
    h, w = reference.shape[:2]
    if max_disp >= w:
        raise ValueError(f"max_disp {max_disp} must be < width {w}")
    lo, hi = (0, max_disp) if search is None else search
    if not (-w < lo <= hi < w):
        raise ValueError(f"bad search range ({lo}, {hi}) for width {w}")

    shifts = list(range(lo, hi + 1))
    costs = np.empty((len(shifts), h, w), np.float32)
    for i, d in enumerate(shifts):
        diff = reference - _shift_columns(target, d)
        sq = np.sum(diff * diff, axis=2)
        costs[i] = uniform_filter(sq, size=patch, mode="nearest")

    # ascending |d| scan with strict improvement -> ties pick smaller shift
    order = np.argsort([abs(d) for d in shifts], kind="stable")
    best_idx = np.full((h, w), order[0], np.int64)
    best_cost = costs[order[0]].copy()
    for i in order[1:]:
        better = costs[i] < best_cost
        best_idx[better] = i
        best_cost[better] = costs[i][better]

    disp = np.array(shifts, np.float32)[best_idx]

    # parabolic subpixel refinement where both neighbors exist
    interior = (best_idx > 0) & (best_idx < len(shifts) - 1)
    iy, ix = np.nonzero(interior)
    ii = best_idx[iy, ix]
    c0 = costs[ii - 1, iy, ix]
    c1 = costs[ii, iy, ix]
    c2 = costs[ii + 1, iy, ix]
    denom = c0 - 2.0 * c1 + c2
    offset = np.where(denom > 1e-12, 0.5 * (c0 - c2) / np.maximum(denom, 1e-12), 0.0)
    disp[iy, ix] += np.clip(offset, -0.5, 0.5)
    return disp[:, :, None].astype(np.float32)


def lr_consistency_mask(d_lr: np.ndarray, d_rl: np.ndarray,
                        tol: float = 1.0) -> np.ndarray:
    """Round-trip failure mask: 1 iff |d_lr(x) + d_rl(x - d_lr(x))| > tol.

    Under the package convention left(x) = right(x - d_lr), the match of
    a left pixel x lives at x - d_lr(x) in the right view, so that is
    where the reverse map is sampled. Symmetric in (d_lr, d_rl) with the
    sign conventions flipped.
    """
    d_lr = as_frame(d_lr, channels=1)
    d_rl = as_frame(d_rl, channels=1)
    if d_lr.shape != d_rl.shape:
        raise ValueError("disparity map shape mismatch")
    h, w = d_lr.shape[:2]
    gy, gx = np.mgrid[0:h, 0:w]
    back = bilinear_sample(d_rl, gx - d_lr[:, :, 0], gy)[:, :, 0]
    bad = np.abs(d_lr[:, :, 0] + back) > tol
    return bad.astype(np.float32)[:, :, None]


def max_disparity_filter(pair: StereoPair, threshold: float = 60.0,
                         max_disp=None, patch: int = 7,
                         percentile: float = 99.5):
    """Dataset curation filter: keep iff the robust max disparity <= threshold.

    The statistic is the given percentile (99.5 by default, to resist
    single-pixel outliers) over all frames of the block-matched
    left-vs-right disparity.
    """
    w = pair.left.width
    if max_disp is None:
        max_disp = min(w - patch, int(round(1.25 * threshold)) + 8)
    max_disp = int(max(1, max_disp))
    values = []
    for lf, rf in zip(pair.left.frames, pair.right.frames):
        d = block_match_disparity(lf, rf, max_disp, patch)
        values.append(d.ravel())
    measured = float(np.percentile(np.concatenate(values), percentile))
    return measured <= threshold, measured


def fit_scale_shift(d_est: np.ndarray, d_ref: np.ndarray,
                    valid: np.ndarray = None):
    """Closed-form least squares (s, t) minimizing ||s*d_est + t - d_ref||.

    `valid` marks usable pixels with nonzero values; by convention a
    disocclusion mask must be inverted by the caller.
    """
    d_est = as_frame(d_est, channels=1)[:, :, 0]
    d_ref = as_frame(d_ref, channels=1)[:, :, 0]
    if d_est.shape != d_ref.shape:
        raise ValueError("disparity map shape mismatch")
    if valid is None:
        sel = np.ones(d_est.shape, bool)
    else:
        sel = as_frame(valid, channels=1)[:, :, 0] > 0.5
    x = d_est[sel].astype(np.float64)
    y = d_ref[sel].astype(np.float64)
    if x.size < 2 or np.ptp(x) < 1e-12:
        raise ValueError("scale/shift fit is degenerate: need >= 2 distinct d_est values")
    A = np.stack([x, np.ones_like(x)], axis=1)
    (s, t), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(s), float(t)

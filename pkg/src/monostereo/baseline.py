"""Warp-and-inpaint baseline: splat the right view by a single-layer
disparity, inpaint disocclusions with a conditional diffusion model, and
refine at full resolution with mask-blended partial denoising.

The single-layer disparity deliberately carries only opaque-surface
depth (what a good monocular depth model would produce), so reflections
ride along with their host surface: the documented failure mode on
specular scenes that the direct pipeline avoids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F

from .denoiser import ConditionalDenoiser, DenoiserConfig
from .diffusion import NoiseSchedule, normalize, sample, sde_edit
from .disparity import (block_match_disparity, fit_scale_shift,
                        lr_consistency_mask)
from .frames import Video, resize_bilinear
from .pipeline import BASE_RES, frames_to_tensor, tensor_to_frames
from .training import TrainConfig, train_model
from .warping import disocclusion_from_weight, forward_splat_softmax, morph


def oracle_surface_disparity(bundle, frame_index: int = 0,
                             res: Optional[int] = None) -> np.ndarray:
    """Right-view single-layer disparity from the opaque layers only."""
    native = bundle.scene.params.resolution
    d_map = np.zeros((native, native), np.float32)
    for i, mode in enumerate(bundle.modes):
        if mode != "over":
            continue
        vis = bundle.layer_masks[i].frames[frame_index][:, :, 0] > 0.5
        d_map[vis] = bundle.disparities[i]
    d_map = d_map[:, :, None]
    if res is not None and res != native:
        d_map = resize_bilinear(d_map, res, res) * (res / native)
    return d_map


def _matched_training_example(left, right, max_disp, patch=5, tol=1.0):
    """Block-matched warp + consistency mask for one training pair."""
    d_lr = block_match_disparity(left, right, max_disp, patch)
    d_rl = block_match_disparity(right, left, max_disp, patch,
                                 search=(-max_disp, 0))
    mask = lr_consistency_mask(d_lr, d_rl, tol)
    warped, weight = forward_splat_softmax(right, -d_rl)
    unmapped = disocclusion_from_weight(weight)
    mask = np.maximum(mask, unmapped)
    return warped, mask


def train_inpainter(bundles, config: TrainConfig, base_res: int = BASE_RES,
                    progress_every: int = 0):
    """Train the disocclusion inpainter; returns (model, losses).

    Per example the condition is the right frame forward-splatted by its
    block-matched disparity plus the left-right consistency mask, both at
    base resolution; the target is the ground-truth left frame.
    """
    if not bundles:
        raise ValueError("empty training dataset")
    scale = base_res / bundles[0].scene.params.resolution
    max_disp = int(math.ceil(max(max(b.disparities) for b in bundles) * scale)) + 2

    targets, conds = [], []
    for b in bundles:
        for lf, rf in zip(b.pair.left.frames, b.pair.right.frames):
            lf = resize_bilinear(lf, base_res, base_res)
            rf = resize_bilinear(rf, base_res, base_res)
            warped, mask = _matched_training_example(lf, rf, max_disp)
            targets.append(lf)
            conds.append(np.concatenate([warped, mask], axis=2))
    targets = frames_to_tensor(np.stack(targets))
    conds = frames_to_tensor(np.stack(conds), norm=False)
    conds[:, :3] = normalize(conds[:, :3])  # mask channel stays 0/1

    torch.manual_seed(config.seed)  # reproducible initial weights
    model = ConditionalDenoiser(DenoiserConfig(target_channels=3, cond_channels=4))

    def batch(generator):
        idx = torch.randint(0, targets.shape[0], (config.batch_size,),
                            generator=generator)
        return targets[idx], conds[idx]

    losses = train_model(model, batch, config, progress_every)
    return model, losses


@dataclass(frozen=True)
class BaselineOptions:
    base_steps: int = 50
    refine_steps: int = 48
    t_start: float = 0.9
    seed: int = 0
    downscale: int = 2
    splat_sharpness: float = 10.0
    open_radius: int = 1
    dilate_radius: int = 2
    mask_downsample_thresh: float = 0.25


def baseline_generate(right: Video, disparity: np.ndarray,
                      inpainter: ConditionalDenoiser, schedule: NoiseSchedule,
                      opts: BaselineOptions = BaselineOptions(),
                      align_reference: Optional[np.ndarray] = None,
                      align_valid: Optional[np.ndarray] = None) -> Video:
    """Warp-and-inpaint inference for a right-eye video.

    `disparity` is a (T, H, W, 1) right-view disparity stack (or a single
    map broadcast over frames). When `align_reference` is given, a global
    scale/shift is fitted to it first (scale-invariant estimators).
    """
    if inpainter.config.cond_channels != 4:
        raise ValueError("inpainter must take (warped, mask) conditioning")
    disparity = np.asarray(disparity, np.float32)
    if disparity.ndim == 3:
        disparity = np.broadcast_to(disparity[None],
                                    (len(right),) + disparity.shape).copy()
    if disparity.shape[:3] != right.frames.shape[:3]:
        raise ValueError(f"disparity shape {disparity.shape} does not match "
                         f"video {right.frames.shape}")
    if align_reference is not None:
        s, t = fit_scale_shift(disparity[0], align_reference, align_valid)
        disparity = s * disparity + t

    h, w = right.height, right.width
    base_h, base_w = h // opts.downscale, w // opts.downscale

    warped_full, masks_full = [], []
    for frame, disp in zip(right.frames, disparity):
        warped, weight = forward_splat_softmax(frame, disp, opts.splat_sharpness)
        unmapped = disocclusion_from_weight(weight)
        mask = morph(unmapped, "open", opts.open_radius)
        mask = morph(mask, "dilate", opts.dilate_radius)
        # opening can erase disocclusion bands narrower than its element,
        # but pixels the splat never reached must be inpainted regardless
        mask = np.maximum(mask, unmapped)
        warped_full.append(warped)
        masks_full.append(mask)
    warped_full = np.stack(warped_full)
    masks_full = np.stack(masks_full)

    warped_base = np.stack([resize_bilinear(f, base_w, base_h)
                            for f in warped_full])
    masks_base = np.stack([
        (resize_bilinear(m, base_w, base_h) > opts.mask_downsample_thresh)
        .astype(np.float32) for m in masks_full])

    cond_base = torch.cat([frames_to_tensor(warped_base),
                           frames_to_tensor(masks_base, norm=False)], dim=1)
    inpainted = sample(inpainter, schedule, cond_base, opts.base_steps,
                       opts.seed)

    init = F.interpolate(inpainted, size=(h, w), mode="bilinear",
                         align_corners=False)
    warped_t = frames_to_tensor(warped_full)
    mask_t = frames_to_tensor(masks_full, norm=False)
    cond_full = torch.cat([warped_t, mask_t], dim=1)

    def blend(x0_hat):
        # keep model output only where inpainting is needed
        return mask_t * x0_hat + (1.0 - mask_t) * warped_t

    out = sde_edit(inpainter, schedule, init, opts.t_start, cond_full,
                   opts.refine_steps, opts.seed + 1, x0_transform=blend)
    return Video(tensor_to_frames(out), fps=right.fps)

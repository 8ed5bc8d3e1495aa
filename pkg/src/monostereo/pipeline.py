"""Two-stage mono-to-stereo synthesis.

The base generator is trained on downsampled stereo pairs and learns the
left-from-right mapping with correct low-resolution disparity. The
refiner shares the architecture but trains on aligned full-resolution
crops, giving it correct-scale detail at the cost of a uniform-shift
bias. Inference combines them: base-generate at low resolution,
bilinearly upsample, partially noise, and denoise with the refiner
conditioned on the full-resolution right view.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import binary_erosion

from .denoiser import ConditionalDenoiser, DenoiserConfig
from .diffusion import NoiseSchedule, denormalize, normalize, sample, sde_edit
from .frames import Video, resize_bilinear
from .metrics import measure_shift, _luminance
from .scenes import render_layer_component
from .training import TrainConfig, train_model

FULL_RES = 64
BASE_RES = 32
CROP_SIZE = 32


def frames_to_tensor(frames: np.ndarray, norm: bool = True) -> torch.Tensor:
    """(N, H, W, C) float image stack -> (N, C, H, W) tensor in [-1, 1]."""
    t = torch.from_numpy(np.ascontiguousarray(frames)).permute(0, 3, 1, 2).float()
    return normalize(t) if norm else t


def tensor_to_frames(t: torch.Tensor) -> np.ndarray:
    return denormalize(t.permute(0, 2, 3, 1).numpy()).astype(np.float32)


def _stack_pairs(bundles, res: Optional[int]):
    lefts, rights = [], []
    for b in bundles:
        for lf, rf in zip(b.pair.left.frames, b.pair.right.frames):
            if res is not None and lf.shape[0] != res:
                lf = resize_bilinear(lf, res, res)
                rf = resize_bilinear(rf, res, res)
            lefts.append(lf)
            rights.append(rf)
    return (frames_to_tensor(np.stack(lefts)),
            frames_to_tensor(np.stack(rights)))


def train_base(bundles, config: TrainConfig, base_res: int = BASE_RES,
               progress_every: int = 0):
    """Train the low-resolution conditional generator; returns (model, losses)."""
    if not bundles:
        raise ValueError("empty training dataset")
    targets, conds = _stack_pairs(bundles, base_res)
    torch.manual_seed(config.seed)  # reproducible initial weights
    model = ConditionalDenoiser(DenoiserConfig(target_channels=3, cond_channels=3))

    def batch(generator):
        idx = torch.randint(0, targets.shape[0], (config.batch_size,),
                            generator=generator)
        return targets[idx], conds[idx]

    losses = train_model(model, batch, config, progress_every)
    return model, losses


def train_refiner(bundles, config: TrainConfig, full_res: int = FULL_RES,
                  crop_size: int = CROP_SIZE, progress_every: int = 0):
    """Train the refiner on aligned random crops of full-resolution pairs."""
    if not bundles:
        raise ValueError("empty training dataset")
    targets, conds = _stack_pairs(bundles, full_res)
    if crop_size > targets.shape[-1]:
        raise ValueError(f"crop {crop_size} larger than frame {targets.shape[-1]}")
    torch.manual_seed(config.seed)  # reproducible initial weights
    model = ConditionalDenoiser(DenoiserConfig(target_channels=3, cond_channels=3))
    span = targets.shape[-1] - crop_size + 1

    def batch(generator):
        idx = torch.randint(0, targets.shape[0], (config.batch_size,),
                            generator=generator)
        xs = torch.randint(0, span, (config.batch_size,), generator=generator)
        ys = torch.randint(0, span, (config.batch_size,), generator=generator)
        tgt = torch.stack([targets[i, :, y : y + crop_size, x : x + crop_size]
                           for i, x, y in zip(idx, xs, ys)])
        cnd = torch.stack([conds[i, :, y : y + crop_size, x : x + crop_size]
                           for i, x, y in zip(idx, xs, ys)])
        return tgt, cnd

    losses = train_model(model, batch, config, progress_every)
    return model, losses


@dataclass(frozen=True)
class GenerateOptions:
    base_steps: int = 50
    refine_steps: int = 48
    t_start: float = 0.9
    seed: int = 0
    downscale: int = 2             # full:base resolution ratio
    base_sample_res: Optional[int] = None  # override base sampling resolution


def _check_cond_channels(model, expected, name):
    if model.config.cond_channels != expected:
        raise ValueError(f"{name} model expects {model.config.cond_channels} "
                         f"condition channels, need {expected}")


def generate_left(right: Video, base_model: ConditionalDenoiser,
                  refiner_model: ConditionalDenoiser, schedule: NoiseSchedule,
                  opts: GenerateOptions = GenerateOptions()) -> Video:
    """Synthesize the left-eye video for a right-eye input."""
    _check_cond_channels(base_model, 3, "base")
    _check_cond_channels(refiner_model, 3, "refiner")
    h, w = right.height, right.width
    base_h = opts.base_sample_res or h // opts.downscale
    base_w = opts.base_sample_res or w // opts.downscale

    cond_full = frames_to_tensor(right.frames)
    cond_base = F.interpolate(cond_full, size=(base_h, base_w), mode="bilinear",
                              align_corners=False)
    base_out = sample(base_model, schedule, cond_base, opts.base_steps, opts.seed)
    init = F.interpolate(base_out, size=(h, w), mode="bilinear",
                         align_corners=False)
    out = sde_edit(refiner_model, schedule, init, opts.t_start, cond_full,
                   opts.refine_steps, opts.seed + 1)
    return Video(tensor_to_frames(out), fps=right.fps)


def generate_base_only(right: Video, base_model, schedule,
                       sample_res: int, steps: int = 50, seed: int = 0) -> Video:
    """Sample the base generator alone at an arbitrary resolution."""
    _check_cond_channels(base_model, 3, "base")
    cond = frames_to_tensor(right.frames)
    cond = F.interpolate(cond, size=(sample_res, sample_res), mode="bilinear",
                         align_corners=False)
    out = sample(base_model, schedule, cond, steps, seed)
    return Video(tensor_to_frames(out), fps=right.fps)


def measure_disparity_scale(outputs, bundles, sample_res: int):
    """Mean per-layer shifts of generated views sampled at `sample_res`.

    `outputs` maps bundle seed -> Video at the sampling resolution.
    Ground-truth disparities are scaled by sample_res / native resolution.
    Additive layers are skipped (scale measurement targets opaque content).
    Returns per-scene lists of (layer, measured, gt_scaled).
    """
    results = {}
    for b in bundles:
        native = b.scene.params.resolution
        ratio = sample_res / native
        right = b.pair.right.frames[0]
        ref = right
        for j, mode in enumerate(b.modes):
            if mode == "add":
                ref = ref - render_layer_component(b.scene, j, "right", 0)
        ref_rs = resize_bilinear(ref, sample_res, sample_res)
        out = outputs[b.seed].frames[0]
        rows = []
        for i, mode in enumerate(b.modes):
            if mode != "over":
                continue
            mask = resize_bilinear(b.layer_masks[i].frames[0],
                                   sample_res, sample_res)
            # stay clear of silhouette edges: pixels there mix this
            # layer's shift with whatever lies behind or in front
            sel = binary_erosion(mask[:, :, 0] > 0.5,
                                 structure=np.ones((5, 5), bool))
            mask = sel.astype(np.float32)[:, :, None]
            gt = b.disparities[i] * ratio
            max_shift = max(b.disparities) * ratio + 2.0
            measured = measure_shift(_luminance(ref_rs), _luminance(out),
                                     mask, max_shift)
            if measured is None:
                warnings.warn(f"scene {b.seed} layer {i}: support too small")
                continue
            rows.append((i, measured, gt))
        results[b.seed] = rows
    return results

"""Desk-scale mono-to-stereo video synthesis toolkit."""

from .frames import StereoPair, Video, bilinear_sample, resize_bilinear, to_anaglyph
from .geometry import CameraRig, LayerDepths, disparity_from_depth, depth_from_disparity
from .scenes import (SceneBundle, SceneParams, generate_scene, load_bundle,
                     load_dataset, make_dataset, render_bundle, save_bundle)
from .disparity import (block_match_disparity, fit_scale_shift,
                        lr_consistency_mask, max_disparity_filter)
from .warping import backward_warp, disocclusion_from_weight, forward_splat_softmax, morph
from .projection import PerspectiveIntrinsics, equirect_to_perspective
from .metrics import compare_report, layer_shift_error, measure_shift, psnr
from .diffusion import NoiseSchedule, make_schedule, q_sample, sample, sde_edit
from .denoiser import ConditionalDenoiser, DenoiserConfig
from .checkpoint import CheckpointError, load_model, read_tensors, save_model, write_tensors
from .training import TrainConfig, train_model, train_step
from .pipeline import GenerateOptions, generate_left, train_base, train_refiner
from .baseline import (BaselineOptions, baseline_generate,
                       oracle_surface_disparity, train_inpainter)

__version__ = "0.1.0"

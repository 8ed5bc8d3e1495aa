import numpy as np
import pytest
import torch

from monostereo.denoiser import ConditionalDenoiser, DenoiserConfig
from monostereo.diffusion import make_schedule
from monostereo.frames import Video
from monostereo.pipeline import (GenerateOptions, frames_to_tensor,
                                 generate_base_only, generate_left,
                                 tensor_to_frames, train_base, train_refiner)
from monostereo.scenes import SceneParams, generate_scene, render_bundle
from monostereo.training import TrainConfig

TINY = DenoiserConfig(target_channels=3, cond_channels=3, widths=(8, 16),
                      time_dim=8, groups=4)


def _tiny_model(seed=0):
    torch.manual_seed(seed)
    return ConditionalDenoiser(TINY).eval()


def _bundles(n=2, res=32):
    params = SceneParams(resolution=res, n_shapes_range=(1, 1))
    return [render_bundle(generate_scene(s, params)) for s in range(n)]


def test_tensor_round_trip():
    rng = np.random.default_rng(0)
    frames = rng.random((2, 8, 8, 3)).astype(np.float32)
    t = frames_to_tensor(frames)
    assert t.shape == (2, 3, 8, 8)
    assert t.min() >= -1.0 and t.max() <= 1.0
    back = tensor_to_frames(t)
    np.testing.assert_allclose(back, frames, atol=1e-6)


def test_train_base_smoke():
    model, losses = train_base(_bundles(), TrainConfig(seed=0, steps=3,
                                                       batch_size=2))
    assert len(losses) == 3
    assert model.config.cond_channels == 3


def test_train_refiner_smoke():
    bundles = _bundles(res=48)
    model, losses = train_refiner(bundles, TrainConfig(seed=0, steps=3,
                                                       batch_size=2),
                                  full_res=48, crop_size=32)
    assert len(losses) == 3


def test_train_refiner_crop_too_large():
    with pytest.raises(ValueError):
        train_refiner(_bundles(res=32), TrainConfig(seed=0, steps=1),
                      full_res=32, crop_size=64)


def test_train_empty_dataset_raises():
    with pytest.raises(ValueError):
        train_base([], TrainConfig(seed=0, steps=1))


def test_generate_left_shapes_and_determinism():
    bundle = _bundles(n=1, res=32)[0]
    right = bundle.pair.right
    base = _tiny_model(0)
    refiner = _tiny_model(1)
    s = make_schedule(50)
    opts = GenerateOptions(base_steps=4, refine_steps=4, seed=3)
    a = generate_left(right, base, refiner, s, opts)
    b = generate_left(right, base, refiner, s, opts)
    assert a.frames.shape == right.frames.shape
    assert a.fps == right.fps
    np.testing.assert_array_equal(a.frames, b.frames)
    c = generate_left(right, base, refiner, s,
                      GenerateOptions(base_steps=4, refine_steps=4, seed=4))
    assert not np.array_equal(a.frames, c.frames)


def test_generate_base_only_resolution():
    bundle = _bundles(n=1, res=32)[0]
    out = generate_base_only(bundle.pair.right, _tiny_model(), make_schedule(50),
                             sample_res=24, steps=4)
    assert out.frames.shape == (1, 24, 24, 3)


def test_generate_rejects_wrong_cond_channels():
    bundle = _bundles(n=1, res=32)[0]
    torch.manual_seed(0)
    four = ConditionalDenoiser(DenoiserConfig(cond_channels=4, widths=(8, 16),
                                              time_dim=8, groups=4))
    with pytest.raises(ValueError):
        generate_left(bundle.pair.right, four, _tiny_model(), make_schedule(50),
                      GenerateOptions(base_steps=2, refine_steps=2))

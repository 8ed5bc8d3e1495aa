"""Shared fixtures-support code for the acceptance suite.

Trained checkpoints are cached under tests/_cache (override with the
MONOSTEREO_TEST_CACHE environment variable) keyed by their training
configuration, so repeat pytest runs skip the expensive training.
"""

import os
from pathlib import Path

from monostereo.baseline import train_inpainter
from monostereo.checkpoint import CheckpointError, load_model, save_model
from monostereo.pipeline import train_base, train_refiner
from monostereo.scenes import (SceneParams, generate_scene, render_bundle,
                               scene_seed)
from monostereo.training import TrainConfig

CACHE_DIR = Path(os.environ.get("MONOSTEREO_TEST_CACHE",
                                str(Path(__file__).parent / "_cache")))

# 64x64 scenes, one reflective-capable shape: surface disparity ~4 px
# (depth 0.98-1.10 at f*b = 4.16), reflection ~1 px (depth 3.8-4.6)
ACCEPT_PARAMS = SceneParams(resolution=64, n_shapes_range=(1, 1),
                            reflection_prob=0.5,
                            surface_depth_range=(0.98, 1.10),
                            reflection_depth_range=(3.8, 4.6))

TRAIN_MASTER_SEED = 100
N_TRAIN_SCENES = 60

BASE_CFG = TrainConfig(seed=1, steps=9000, batch_size=16, learning_rate=2e-4)
REFINER_CFG = TrainConfig(seed=2, steps=9000, batch_size=16,
                          learning_rate=2e-4, condition_mode="crops")
INPAINTER_CFG = TrainConfig(seed=3, steps=6000, batch_size=16,
                            learning_rate=2e-4, condition_mode="warped+mask")

_TRAINERS = {
    "base": (BASE_CFG, train_base),
    "refiner": (REFINER_CFG, train_refiner),
    "inpainter": (INPAINTER_CFG, train_inpainter),
}


def params_with(**overrides) -> SceneParams:
    return SceneParams(**{**ACCEPT_PARAMS.__dict__, **overrides})


def training_bundles():
    return [render_bundle(generate_scene(scene_seed(TRAIN_MASTER_SEED, i),
                                         ACCEPT_PARAMS))
            for i in range(N_TRAIN_SCENES)]


def specular_bundles(n=30, master=500, limit=300):
    params = params_with(reflection_prob=1.0)
    out = []
    i = 0
    while len(out) < n and i < limit:
        b = render_bundle(generate_scene(scene_seed(master, i), params))
        if b.is_specular:
            out.append(b)
        i += 1
    if len(out) < n:
        raise RuntimeError(f"only {len(out)} specular scenes in {limit} draws")
    return out


def lambertian_bundles(n=30, master=600):
    params = params_with(reflection_prob=0.0)
    return [render_bundle(generate_scene(scene_seed(master, i), params))
            for i in range(n)]


def cache_path(kind: str) -> Path:
    cfg = _TRAINERS[kind][0]
    return CACHE_DIR / (f"{kind}_s{cfg.seed}_n{cfg.steps}"
                        f"_b{cfg.batch_size}_lr{cfg.learning_rate:g}.ckpt")


def load_or_train(kind: str, bundles=None):
    """Load the cached checkpoint for `kind`, training it if absent."""
    cfg, trainer = _TRAINERS[kind]
    path = cache_path(kind)
    if path.exists():
        try:
            model, _ = load_model(path)
            return model
        except CheckpointError:
            path.unlink()
    if bundles is None:
        bundles = training_bundles()
    model, _losses = trainer(bundles, cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(path, model, cfg.to_json())
    return model

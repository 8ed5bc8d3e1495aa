"""Procedural layered scenes with exact per-layer stereo ground truth.

A scene is a back-to-front stack of fronto-parallel layers, each with a
constant depth and therefore a single scalar disparity d = f*b/z. The
right view renders layers with zero shift; the left view shifts each
layer rightward by its own disparity before compositing, so every
rendered stereo pair comes with exact per-layer ground truth.

Opaque layers composite with standard alpha-over. Specular content is an
additive-reflection layer: a reflectance-scaled texture added inside a
support region contained in its host surface, at a (virtual) depth that
differs from the host's. This is the minimal physically grounded model
in which one pixel carries two disparities.

Layer textures are band-limited noise: backgrounds mid-frequency, host
surfaces low-frequency (smooth bodies with sharp silhouettes), and
reflections high-frequency, so that block matching and masked
cross-correlation can lock onto each component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import binary_erosion, gaussian_filter

from .frames import StereoPair, Video, bilinear_sample
from .geometry import CameraRig, disparity_from_depth
from . import imgio


@dataclass(frozen=True)
class SceneParams:
    resolution: int = 64
    frame_count: int = 1
    fps: float = 16.0
    baseline_m: float = 0.065
    focal_px: Optional[float] = None  # defaults to `resolution`
    n_shapes_range: tuple = (1, 2)
    bg_depth_range: tuple = (3.0, 6.0)
    surface_depth_range: tuple = (0.95, 1.15)
    extra_depth_range: tuple = (1.6, 2.6)
    reflection_depth_range: tuple = (3.5, 5.2)
    reflection_prob: float = 0.5
    reflection_gain_range: tuple = (0.2, 0.35)
    max_velocity_px: float = 1.0

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        for name in ("bg_depth_range", "surface_depth_range",
                     "extra_depth_range", "reflection_depth_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"degenerate {name}: ({lo}, {hi})")
        lo, hi = self.n_shapes_range
        if not (1 <= lo <= hi):
            raise ValueError("n_shapes_range must satisfy 1 <= lo <= hi")

    @property
    def focal(self) -> float:
        return float(self.focal_px if self.focal_px is not None else self.resolution)

    def rig(self) -> CameraRig:
        return CameraRig(self.focal, self.baseline_m,
                         self.resolution, self.resolution)


@dataclass(frozen=True)
class Layer:
    """One fronto-parallel layer; texture/alpha are oversized canvases."""

    texture: np.ndarray          # (H+2m, W+2m, 3)
    alpha: np.ndarray            # (H+2m, W+2m, 1), in [0, 1]
    depth_m: float
    mode: str                    # "over" | "add"
    velocity: tuple = (0.0, 0.0)  # px/frame drift (vx, vy)

    def __post_init__(self):
        if self.mode not in ("over", "add"):
            raise ValueError(f"unknown layer mode {self.mode!r}")
        if self.depth_m <= 0:
            raise ValueError("layer depth must be positive")


@dataclass(frozen=True)
class LayeredScene:
    rig: CameraRig
    layers: tuple                # back-to-front Layer tuple
    seed: int
    params: SceneParams
    margin: int

    @property
    def disparities(self):
        return tuple(disparity_from_depth(self.rig, l.depth_m) for l in self.layers)

    @property
    def is_specular(self) -> bool:
        return any(l.mode == "add" for l in self.layers)


@dataclass(frozen=True)
class SceneBundle:
    """A rendered scene plus everything needed to score methods against it."""

    scene: LayeredScene
    pair: StereoPair
    layer_masks: tuple           # per layer: (T, H, W, 1) visibility in right view
    disparities: tuple
    modes: tuple
    host_index: tuple            # per layer: host layer index for "add", else -1
    seed: int

    @property
    def is_specular(self) -> bool:
        return self.scene.is_specular


def _bandlimited(rng, h, w, sigma, channels=3):
    """Zero-mean band-limited noise, normalized to unit std per channel."""
    noise = rng.standard_normal((h, w, channels))
    smooth = gaussian_filter(noise, sigma=(sigma, sigma, 0))
    std = smooth.std(axis=(0, 1), keepdims=True)
    return (smooth / np.maximum(std, 1e-8)).astype(np.float32)


def _shape_mask(rng, size, res):
    """Random filled rectangle or ellipse on a (size, size) canvas."""
    cx = rng.uniform(0.35, 0.65) * res
    cy = rng.uniform(0.35, 0.65) * res
    hw = rng.uniform(0.18, 0.30) * res
    hh = rng.uniform(0.18, 0.30) * res
    off = (size - res) / 2.0
    ys, xs = np.mgrid[0:size, 0:size]
    xs = xs - off - cx
    ys = ys - off - cy
    if rng.random() < 0.5:
        mask = (np.abs(xs) <= hw) & (np.abs(ys) <= hh)
    else:
        mask = (xs / hw) ** 2 + (ys / hh) ** 2 <= 1.0
    return mask


def scene_seed(master_seed: int, index: int) -> int:
    """Deterministic per-scene seed derived from a master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFF)


def generate_scene(seed: int, params: SceneParams = SceneParams()) -> LayeredScene:
    """Deterministically generate a layered scene from a seed."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA5CE]))
    res = params.resolution
    rig = params.rig()

    max_disp = disparity_from_depth(rig, min(params.surface_depth_range[0],
                                             params.extra_depth_range[0]))
    margin = int(np.ceil(max_disp + params.max_velocity_px * (params.frame_count - 1))) + 4
    size = res + 2 * margin

    def velocity():
        if params.frame_count < 2:
            return (0.0, 0.0)
        v = rng.uniform(-params.max_velocity_px, params.max_velocity_px, size=2)
        return (float(v[0]), float(v[1]))

    layers = []

    # background: full-coverage texture with energy both at full
    # resolution and after 2x downsampling
    bg_depth = rng.uniform(*params.bg_depth_range)
    bg_tex = (0.45 + 0.10 * _bandlimited(rng, size, size, sigma=1.2)
              + 0.08 * _bandlimited(rng, size, size, sigma=2.5))
    layers.append(Layer(np.clip(bg_tex, 0.02, 0.98),
                        np.ones((size, size, 1), np.float32),
                        float(bg_depth), "over", velocity()))

    # opaque shapes, far to near; the front-most is the reflection host
    n_shapes = int(rng.integers(params.n_shapes_range[0],
                                params.n_shapes_range[1] + 1))
    shape_layers = []
    for i in range(n_shapes):
        depth_range = (params.surface_depth_range if i == n_shapes - 1
                       else params.extra_depth_range)
        depth = rng.uniform(*depth_range)
        base = rng.uniform(0.30, 0.50, size=3).astype(np.float32)
        tex = (base[None, None, :]
               + 0.075 * _bandlimited(rng, size, size, sigma=3.0)
               + 0.05 * _bandlimited(rng, size, size, sigma=2.2)
               + 0.035 * _bandlimited(rng, size, size, sigma=1.5))
        mask = _shape_mask(rng, size, res)
        alpha = mask.astype(np.float32)[:, :, None]
        shape_layers.append(Layer(np.clip(tex, 0.02, 0.80), alpha,
                                  float(depth), "over", velocity()))
    shape_layers.sort(key=lambda l: -l.depth_m)
    layers.extend(shape_layers)

    # optional additive reflection riding on the front-most shape
    if rng.random() < params.reflection_prob:
        host = layers[-1]
        support = binary_erosion(host.alpha[:, :, 0] > 0.5,
                                 structure=np.ones((11, 11), bool))
        if support.sum() >= 64:
            depth = rng.uniform(*params.reflection_depth_range)
            gain = rng.uniform(*params.reflection_gain_range)
            pattern = 0.5 + 0.5 * np.tanh(_bandlimited(rng, size, size, sigma=0.8))
            tex = (gain * pattern).astype(np.float32)
            layers.append(Layer(tex, support.astype(np.float32)[:, :, None],
                                float(depth), "add", host.velocity))

    return LayeredScene(rig, tuple(layers), int(seed), params, margin)


def _layer_grids(scene, layer, frame_index, shift):
    res = scene.params.resolution
    m = scene.margin
    vx, vy = layer.velocity
    xs = np.arange(res) + m - vx * frame_index - shift
    ys = np.arange(res) + m - vy * frame_index
    return np.meshgrid(xs, ys)


def render_view(scene: LayeredScene, eye: str, frame_index: int) -> np.ndarray:
    """Render one eye of one frame; left shifts each layer by its disparity."""
    if eye not in ("left", "right"):
        raise ValueError(f"eye must be 'left' or 'right', got {eye!r}")
    if not 0 <= frame_index < scene.params.frame_count:
        raise ValueError(f"frame_index {frame_index} out of range")
    res = scene.params.resolution
    out = np.zeros((res, res, 3), np.float32)
    for layer, d in zip(scene.layers, scene.disparities):
        shift = d if eye == "left" else 0.0
        gx, gy = _layer_grids(scene, layer, frame_index, shift)
        color = bilinear_sample(layer.texture, gx, gy)
        alpha = bilinear_sample(layer.alpha, gx, gy)
        if layer.mode == "over":
            out = alpha * color + (1.0 - alpha) * out
        else:
            out = np.clip(out + alpha * color, 0.0, 1.0)
    return out


def render_layer_component(scene, layer_index, eye, frame_index):
    """The isolated additive contribution (alpha * texture) of one layer."""
    layer = scene.layers[layer_index]
    d = scene.disparities[layer_index]
    shift = d if eye == "left" else 0.0
    gx, gy = _layer_grids(scene, layer, frame_index, shift)
    color = bilinear_sample(layer.texture, gx, gy)
    alpha = bilinear_sample(layer.alpha, gx, gy)
    return alpha * color


def render_without_layer(scene, layer_index, eye, frame_index):
    """Render the scene with one layer removed (exact host-only view)."""
    sub = LayeredScene(scene.rig,
                       tuple(l for i, l in enumerate(scene.layers) if i != layer_index),
                       scene.seed, scene.params, scene.margin)
    return render_view(sub, eye, frame_index)


def _visibility_masks(scene, frame_index):
    """Per-layer binary visibility in the right view (front layers occlude)."""
    res = scene.params.resolution
    alphas = []
    for layer in scene.layers:
        gx, gy = _layer_grids(scene, layer, frame_index, 0.0)
        alphas.append(bilinear_sample(layer.alpha, gx, gy)[:, :, 0])
    n = len(scene.layers)
    masks = []
    for i in range(n):
        vis = alphas[i] > 0.5
        for j in range(i + 1, n):
            if scene.layers[j].mode == "over":
                vis &= ~(alphas[j] > 0.5)
        masks.append(vis.astype(np.float32)[:, :, None])
    return masks


def render_bundle(scene: LayeredScene) -> SceneBundle:
    """Render the full stereo pair plus ground-truth masks and disparities."""
    p = scene.params
    right = np.stack([render_view(scene, "right", k) for k in range(p.frame_count)])
    left = np.stack([render_view(scene, "left", k) for k in range(p.frame_count)])
    masks = []
    for i in range(len(scene.layers)):
        per_frame = [_visibility_masks(scene, k)[i] for k in range(p.frame_count)]
        masks.append(Video(np.stack(per_frame), fps=p.fps))
    host = []
    for i, layer in enumerate(scene.layers):
        if layer.mode == "add":
            # host = nearest opaque layer behind the reflection
            host.append(max(j for j in range(i) if scene.layers[j].mode == "over"))
        else:
            host.append(-1)
    return SceneBundle(
        scene=scene,
        pair=StereoPair(Video(left, fps=p.fps), Video(right, fps=p.fps)),
        layer_masks=tuple(masks),
        disparities=scene.disparities,
        modes=tuple(l.mode for l in scene.layers),
        host_index=tuple(host),
        seed=scene.seed,
    )


def _params_to_json(params: SceneParams) -> dict:
    d = asdict(params)
    d = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
    return d


def _params_from_json(d: dict) -> SceneParams:
    kwargs = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
    return SceneParams(**kwargs)


def save_bundle(bundle: SceneBundle, out_dir) -> Path:
    out_dir = Path(out_dir)
    scene_dir = out_dir / f"scene_{bundle.seed}"
    scene_dir.mkdir(parents=True, exist_ok=True)
    imgio.save_video_png(bundle.pair.right, scene_dir, prefix="right")
    imgio.save_video_png(bundle.pair.left, scene_dir, prefix="left")
    for i, mask in enumerate(bundle.layer_masks):
        imgio.save_video_png(mask, scene_dir, prefix=f"mask_layer{i}")
    meta = {
        "seed": bundle.seed,
        "params": _params_to_json(bundle.scene.params),
        "rig": {"focal_px": bundle.scene.rig.focal_px,
                "baseline_m": bundle.scene.rig.baseline_m},
        "layers": [
            {"depth_m": l.depth_m, "disparity_px": d, "mode": l.mode,
             "host_index": h}
            for l, d, h in zip(bundle.scene.layers, bundle.disparities,
                               bundle.host_index)
        ],
        "specular": bundle.is_specular,
    }
    (scene_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return scene_dir


def load_bundle(scene_dir) -> SceneBundle:
    """Load a saved bundle; the scene is regenerated from its seed."""
    scene_dir = Path(scene_dir)
    meta = json.loads((scene_dir / "meta.json").read_text())
    params = _params_from_json(meta["params"])
    scene = generate_scene(meta["seed"], params)
    right = imgio.load_video_png(scene_dir, prefix="right", fps=params.fps)
    left = imgio.load_video_png(scene_dir, prefix="left", fps=params.fps)
    masks = []
    for i in range(len(scene.layers)):
        masks.append(imgio.load_video_png(scene_dir, prefix=f"mask_layer{i}",
                                          fps=params.fps))
    return SceneBundle(
        scene=scene,
        pair=StereoPair(left, right),
        layer_masks=tuple(masks),
        disparities=scene.disparities,
        modes=tuple(l.mode for l in scene.layers),
        host_index=tuple(m["host_index"] for m in meta["layers"]),
        seed=meta["seed"],
    )


def make_dataset(n_scenes: int, params: SceneParams, output_dir,
                 master_seed: int = 0) -> dict:
    """Write n scene bundles plus a manifest; fully seed-deterministic."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    all_disps = []
    for i in range(n_scenes):
        seed = scene_seed(master_seed, i)
        scene = generate_scene(seed, params)
        bundle = render_bundle(scene)
        scene_dir = save_bundle(bundle, output_dir)
        entries.append({
            "index": i,
            "seed": seed,
            "dir": scene_dir.name,
            "specular": bundle.is_specular,
            "depths_m": [l.depth_m for l in scene.layers],
            "disparities_px": list(bundle.disparities),
        })
        all_disps.extend(bundle.disparities)
    hist, edges = np.histogram(all_disps, bins=16) if all_disps else ([], [])
    manifest = {
        "n_scenes": n_scenes,
        "master_seed": master_seed,
        "params": _params_to_json(params),
        "scenes": entries,
        "disparity_histogram": {
            "counts": [int(c) for c in hist],
            "bin_edges": [float(e) for e in edges],
        },
    }
    (output_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_manifest(dataset_dir) -> dict:
    return json.loads((Path(dataset_dir) / "manifest.json").read_text())


def load_dataset(dataset_dir) -> list:
    manifest = load_manifest(dataset_dir)
    root = Path(dataset_dir)
    return [load_bundle(root / e["dir"]) for e in manifest["scenes"]]

"""Quantitative evaluation: PSNR, per-layer shift measurement, reports.

Layer shifts are measured by normalized cross-correlation between the
band-passed, layer-masked right view and the band-passed method output,
maximized over subpixel horizontal shifts. For additive-reflection
layers the host scene's exact left-view contribution is subtracted from
the output first, isolating the reflected component.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion, gaussian_filter

from .frames import as_frame, bilinear_sample
from .scenes import SceneBundle, render_layer_component, render_without_layer

PSNR_MAX = 99.0
BANDPASS_SIGMA_FINE = 0.7
BANDPASS_SIGMA_COARSE = 2.0
MIN_MASK_SUPPORT = 64


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray = None) -> float:
    """10*log10(1/MSE) with peak 1.0; identical inputs give PSNR_MAX."""
    a = as_frame(a)
    b = as_frame(b)
    if a.shape != b.shape:
        raise ValueError("psnr inputs must have equal shapes")
    err = (a.astype(np.float64) - b.astype(np.float64)) ** 2
    if mask is not None:
        m = as_frame(mask, channels=1)[:, :, 0] > 0.5
        if not m.any():
            raise ValueError("psnr mask selects no pixels")
        err = err[m]
    mse = float(err.mean())
    if mse <= 0.0:
        return PSNR_MAX
    return min(PSNR_MAX, 10.0 * math.log10(1.0 / mse))


def interior_mask(height: int, width: int, margin: int) -> np.ndarray:
    m = np.zeros((height, width, 1), np.float32)
    m[margin : height - margin, margin : width - margin] = 1.0
    return m


def _luminance(frame: np.ndarray) -> np.ndarray:
    frame = as_frame(frame)
    return frame.mean(axis=2)


def band_pass(img: np.ndarray, fine: float = BANDPASS_SIGMA_FINE,
              coarse: float = BANDPASS_SIGMA_COARSE) -> np.ndarray:
    """Difference-of-blurs band-pass; kills DC so NCC ignores flat offsets."""
    return gaussian_filter(img, fine) - gaussian_filter(img, coarse)


def measure_shift(reference: np.ndarray, candidate: np.ndarray,
                  mask: np.ndarray, max_shift: float) -> Optional[float]:
    """Horizontal shift maximizing masked NCC(reference, candidate(x+s)).

    Integer scan over [0, max_shift] with parabolic refinement, then a
    1/32-px local search. Returns None when the mask support is too
    small or the signal is degenerate.
    """
    ref = band_pass(np.asarray(reference, np.float64))
    cand = band_pass(np.asarray(candidate, np.float64))[:, :, None]
    h, w = ref.shape
    m = as_frame(mask, channels=1)[:, :, 0] > 0.5
    # keep sampling positions x+s inside the frame
    reach = int(math.ceil(max_shift)) + 2
    m = m & (np.arange(w)[None, :] < w - reach) & (np.arange(w)[None, :] >= 1)
    m = binary_erosion(m, structure=np.ones((3, 3), bool))
    if m.sum() < MIN_MASK_SUPPORT:
        return None
    my, mx = np.nonzero(m)
    r = ref[my, mx]
    r = r - r.mean()
    rn = np.linalg.norm(r)
    if rn < 1e-9:
        return None

    def ncc(s):
        c = bilinear_sample(cand, mx + s, my)[:, 0].astype(np.float64)
        c = c - c.mean()
        cn = np.linalg.norm(c)
        if cn < 1e-12:
            return -1.0
        return float(np.dot(r, c) / (rn * cn))

    ints = np.arange(0, int(math.floor(max_shift)) + 1)
    scores = np.array([ncc(float(s)) for s in ints])
    k = int(np.argmax(scores))
    best = float(ints[k])
    if 0 < k < len(ints) - 1:
        c0, c1, c2 = scores[k - 1], scores[k], scores[k + 1]
        denom = c0 - 2 * c1 + c2
        if denom < -1e-12:
            best += float(np.clip(0.5 * (c0 - c2) / denom, -0.5, 0.5))
    # fine local search around the parabolic estimate
    lo = max(0.0, best - 0.5)
    hi = min(float(max_shift), best + 0.5)
    grid = np.arange(lo, hi + 1e-9, 1.0 / 32.0)
    fine_scores = [ncc(float(s)) for s in grid]
    return float(grid[int(np.argmax(fine_scores))])


@dataclass(frozen=True)
class LayerShift:
    layer: int
    mode: str
    gt_disparity: float
    measured: Optional[float]

    @property
    def error(self) -> Optional[float]:
        if self.measured is None:
            return None
        return self.measured - self.gt_disparity


def layer_shift_error(output_left: np.ndarray, input_right: np.ndarray,
                      bundle: SceneBundle, frame_index: int = 0,
                      max_shift: float = None) -> list:
    """Per-layer measured shift of a method's left view vs ground truth."""
    output_left = as_frame(output_left, channels=3)
    input_right = as_frame(input_right, channels=3)
    scene = bundle.scene
    if max_shift is None:
        max_shift = max(bundle.disparities) + 2.0
    add_layers = [i for i, m in enumerate(bundle.modes) if m == "add"]
    over_layers = [i for i, m in enumerate(bundle.modes) if m == "over"]
    reach = int(math.ceil(max_shift)) + 2
    results = []
    for i, (mode, d) in enumerate(zip(bundle.modes, bundle.disparities)):
        mask = bundle.layer_masks[i].frames[frame_index]
        if mode == "over":
            # stay away from silhouette edges and from anything a nearer
            # opaque layer occludes in either view: those pixels move at a
            # different disparity and drag the correlation peak
            sel = binary_erosion(mask[:, :, 0] > 0.5,
                                 structure=np.ones((5, 5), bool))
            for j in over_layers:
                if j <= i:
                    continue
                occ = bundle.layer_masks[j].frames[frame_index][:, :, 0] > 0.5
                occ = binary_dilation(occ, structure=np.ones((3, 2 * reach + 1), bool))
                sel &= ~occ
            mask = sel.astype(np.float32)[:, :, None]
        if mode == "add":
            host_left = render_without_layer(scene, i, "left", frame_index)
            residual = _luminance(output_left) - _luminance(host_left)
            component = render_layer_component(scene, i, "right", frame_index)
            measured = measure_shift(_luminance(component) * mask[:, :, 0],
                                     residual, mask, max_shift)
        else:
            # strip reflection components from both signals, so the
            # correlation does not lock onto an overlay moving at its own
            # disparity; the left-side strip assumes correctly placed
            # reflections, which only adds noise terms when it is wrong
            ref = input_right
            cand = output_left
            for j in add_layers:
                ref = ref - render_layer_component(scene, j, "right", frame_index)
                cand = cand - render_layer_component(scene, j, "left", frame_index)
            measured = measure_shift(_luminance(ref), _luminance(cand),
                                     mask, max_shift)
        if measured is None:
            warnings.warn(f"layer {i}: mask support too small, skipped")
        results.append(LayerShift(i, mode, float(d), measured))
    return results


def _scene_rows(name, seed, bundle, output_video, interior_margin):
    rows = []
    for k, (out, gt, right) in enumerate(zip(output_video.frames,
                                             bundle.pair.left.frames,
                                             bundle.pair.right.frames)):
        if out.shape != gt.shape:
            raise ValueError(f"method {name!r}: scene {seed} output shape "
                             f"{out.shape} does not match GT {gt.shape}")
        im = interior_mask(gt.shape[0], gt.shape[1], interior_margin)
        row = {
            "method": name, "seed": seed, "frame": k,
            "specular": bundle.is_specular,
            "psnr_interior": psnr(out, gt, im),
        }
        for ls in layer_shift_error(out, right, bundle, frame_index=k):
            row[f"layer{ls.layer}_{ls.mode}_gt"] = ls.gt_disparity
            row[f"layer{ls.layer}_{ls.mode}_shift"] = ls.measured
            row[f"layer{ls.layer}_{ls.mode}_err"] = ls.error
        rows.append(row)
    return rows


def compare_report(methods: dict, bundles: dict, output_path,
                   interior_margin: int = 8, external_scores: dict = None) -> dict:
    """Tabulate PSNR, layer-shift errors, and pairwise win-rates.

    `methods` maps name -> {seed -> Video of left views}; `bundles` maps
    seed -> SceneBundle. Writes `<output_path>.csv` and a text summary at
    `output_path`. `external_scores` optionally maps
    (method, seed) -> scalar for merging externally computed metrics.
    """
    names = sorted(methods)
    seeds = sorted(bundles)
    for name in names:
        missing = [s for s in seeds if s not in methods[name]]
        if missing:
            raise ValueError(f"method {name!r} is missing scene {missing[0]}")

    rows = []
    for name in names:
        for seed in seeds:
            rows.extend(_scene_rows(name, seed, bundles[seed],
                                    methods[name][seed], interior_margin))
            if external_scores and (name, seed) in external_scores:
                rows[-1]["external"] = external_scores[(name, seed)]

    fields = sorted({k for r in rows for k in r}, key=lambda k: (k != "method", k))
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path.with_suffix(".csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    def scene_psnr(name, seed):
        vals = [r["psnr_interior"] for r in rows
                if r["method"] == name and r["seed"] == seed]
        return float(np.mean(vals))

    summary = {"methods": {}, "win_rates": {}}
    for name in names:
        per = [scene_psnr(name, s) for s in seeds]
        errs = [abs(r[k]) for r in rows if r["method"] == name
                for k in r if k.endswith("_err") and r[k] is not None]
        summary["methods"][name] = {
            "mean_psnr": float(np.mean(per)),
            "median_psnr": float(np.median(per)),
            "mean_abs_shift_err": float(np.mean(errs)) if errs else None,
        }
    for a in names:
        for b in names:
            if a >= b:
                continue
            wins = sum(scene_psnr(a, s) > scene_psnr(b, s) for s in seeds)
            ties = sum(scene_psnr(a, s) == scene_psnr(b, s) for s in seeds)
            rate = (wins + 0.5 * ties) / len(seeds) if seeds else 0.5
            summary["win_rates"][f"{a} vs {b}"] = rate

    lines = [f"scenes: {len(seeds)}  methods: {', '.join(names)}", ""]
    for name in names:
        s = summary["methods"][name]
        err = s["mean_abs_shift_err"]
        lines.append(f"{name:24s} PSNR mean {s['mean_psnr']:6.2f} dB  "
                     f"median {s['median_psnr']:6.2f} dB  "
                     f"|shift err| {err if err is None else round(err, 3)}")
    for pair_name, rate in sorted(summary["win_rates"].items()):
        lines.append(f"win-rate {pair_name}: {100 * rate:.1f}%")
    output_path.write_text("\n".join(lines) + "\n")
    return summary

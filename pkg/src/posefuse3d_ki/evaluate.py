"""Interpolation pipelines, PSNR metrics and benchmark harnesses.

Metric conventions (documented because they change numbers): MSE is pooled
over all interior frames of a clip (whole image or region pixels), giving
one PSNR per clip; corpus values are means over per-clip PSNRs. Region
variants use the per-frame tight bounding box, or the per-frame mask after
binary dilation with a disc structuring element.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage

from .body import BodyTemplate, Camera, body_state, interpolate_params
from .control import ControlBundle, build_control_bundle, render_bundle_from_states
from .dataset import ClipRecord
from .diffusion import sample

PSNR_SATURATED = 99.0

# Published reference numbers for the full-scale system (context only, not
# reproducible at desk scale): strategy -> (PSNR, PSNR_bbox).
REFERENCE_ROWS = {"ve_se": (22.14, 19.30)}


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def mse(pred: np.ndarray, gt: np.ndarray, region=None) -> float:
    """Mean squared error pooled over frames; region (T,H,W) bool optional."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    err = (pred - gt) ** 2
    if region is None:
        return float(err.mean())
    region = np.asarray(region, dtype=bool)
    if not region.any():
        return float("nan")
    return float(err[region].mean())


def psnr_from_mse(value: float, max_val: float = 1.0) -> float:
    if math.isnan(value):
        return float("nan")
    if value <= 0.0:
        return PSNR_SATURATED
    return min(10.0 * math.log10(max_val * max_val / value), PSNR_SATURATED)


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """Whole-image PSNR in dB (MAX=1); saturates at 99 dB for exact match."""
    return psnr_from_mse(mse(pred, gt))


def psnr_region(pred: np.ndarray, gt: np.ndarray, region: np.ndarray) -> float:
    """PSNR over region pixels only; region broadcasts over channels."""
    return psnr_from_mse(mse(pred, gt, region=region))


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Binary dilation with a disc structuring element (dx^2+dy^2 <= r^2)."""
    mask = np.asarray(mask, dtype=bool)
    if radius <= 0:
        return mask.copy()
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    foot = (yy * yy + xx * xx) <= r * r
    return ndimage.binary_dilation(mask, structure=foot)


def bbox_region(bboxes: np.ndarray, shape) -> np.ndarray:
    """Per-frame inclusive boxes (T,4) -> boolean region stack (T,H,W)."""
    T = bboxes.shape[0]
    H, W = shape
    out = np.zeros((T, H, W), dtype=bool)
    for t in range(T):
        x0, y0, x1, y1 = bboxes[t]
        if x1 >= x0 and y1 >= y0 and (x1 or y1 or x0 or y0):
            out[t, y0:y1 + 1, x0:x1 + 1] = True
    return out


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------

def encode_controls(ctrl, bundle: ControlBundle, params=None):
    """Control tensor (1, T, d, gh, gw) for the denoiser, or None."""
    if ctrl is None:
        return None
    with torch.no_grad():
        fused = ctrl.encode_bundle(bundle, params=params)
    return fused[None]


def interpolate(denoiser, ctrl, frame0, frameN, bundle, N: int, *,
                params=None, steps: int = 16, seed: int = 0,
                codec_patch: int = 4) -> np.ndarray:
    """Interior frames 1..N-1 for a keyframe pair under a control bundle."""
    if bundle is not None and bundle.n_frames != N + 1:
        raise ValueError(
            f"bundle has {bundle.n_frames} frames, expected N+1 = {N + 1}")
    control = encode_controls(ctrl, bundle, params) if bundle is not None else None
    frames = sample(denoiser, frame0, frameN, N, control=control, steps=steps,
                    seed=seed, codec_patch=codec_patch)
    return frames[1:N]


def build_controls_itw(params0, paramsN, template: BodyTemplate,
                       camera: Camera, N: int, strategy: str) -> tuple:
    """In-the-wild control bundle from endpoint body parameters only.

    Interior body parameters are slerp/lerp interpolations of the endpoints;
    keypoints come from the projected joints of the interpolated bodies.
    Returns (bundle, params list).
    """
    params = [interpolate_params(params0, paramsN, i / N) for i in range(N + 1)]
    states = [body_state(p, template, camera) for p in params]
    keypoints = np.stack([s.joints2d for s in states])
    scores = np.stack([(s.joint_depth > 0).astype(np.float64) for s in states])
    bundle = render_bundle_from_states(states, keypoints, scores, template,
                                       camera, strategy, params=params)
    bundle.validate()
    return bundle, params


def slice_clip(clip: ClipRecord, start: int, stop: int) -> ClipRecord:
    """Contiguous frame window [start, stop) as a new ClipRecord."""
    return ClipRecord(
        frames=clip.frames[start:stop],
        masks=clip.masks[start:stop],
        bboxes=clip.bboxes[start:stop],
        keypoints2d=clip.keypoints2d[start:stop],
        scores=clip.scores[start:stop],
        params=clip.params[start:stop],
        camera=clip.camera,
        meta=dict(clip.meta),
    )


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------

@dataclass
class ClipMetrics:
    clip_index: int
    psnr: float
    psnr_bbox: float
    psnr_mask: float
    flags: list = field(default_factory=list)


@dataclass
class MetricReport:
    strategy: str
    control_source: str
    gap: int
    n_clips: int
    psnr: float
    psnr_bbox: float
    psnr_mask: float
    flags: list = field(default_factory=list)
    per_clip: list = field(default_factory=list)


def _clip_seed(base_seed: int, clip_index: int, gap: int) -> int:
    return (base_seed * 1000003 + clip_index * 101 + gap) % (2 ** 31)


def evaluate_clip(denoiser, ctrl, clip: ClipRecord, template: BodyTemplate,
                  gap: int, *, control_source: str = "gt", steps: int = 16,
                  seed: int = 0, dilation_radius: int = 1,
                  codec_patch: int = 4, clip_index: int = 0) -> ClipMetrics:
    """Interpolate frames {1..gap-1} from keyframes {0, gap} and score them."""
    window = slice_clip(clip, 0, gap + 1)
    bundle, params = None, None
    if ctrl is not None:
        if control_source == "gt":
            bundle = build_control_bundle(window, template, ctrl.strategy)
            params = window.params
        else:
            bundle, params = build_controls_itw(
                window.params[0], window.params[gap], template, clip.camera,
                gap, ctrl.strategy)
    pred = interpolate(denoiser, ctrl, window.frames[0], window.frames[gap],
                       bundle, gap, params=params, steps=steps,
                       seed=_clip_seed(seed, clip_index, gap),
                       codec_patch=codec_patch)
    gt = window.frames[1:gap]
    flags = []
    whole = mse(pred, gt)
    if whole == 0.0:
        flags.append("saturated")
    boxes = bbox_region(window.bboxes[1:gap], gt.shape[1:3])
    masks = np.stack([dilate_mask(m, dilation_radius)
                      for m in window.masks[1:gap]])
    m_bbox = mse(pred, gt, region=np.broadcast_to(boxes[..., None], gt.shape))
    m_mask = mse(pred, gt, region=np.broadcast_to(masks[..., None], gt.shape))
    if math.isnan(m_bbox) or math.isnan(m_mask):
        flags.append("empty_region")
    return ClipMetrics(
        clip_index=clip_index,
        psnr=psnr_from_mse(whole),
        psnr_bbox=psnr_from_mse(m_bbox),
        psnr_mask=psnr_from_mse(m_mask),
        flags=flags,
    )


def run_benchmark(denoiser, ctrl, records, template, gaps, *,
                  strategy: str, control_source: str = "gt", steps: int = 16,
                  seed: int = 0, dilation_radius: int = 1,
                  codec_patch: int = 4) -> list:
    """One MetricReport per gap; deterministic in seed."""
    reports = []
    for gap in gaps:
        rows = []
        for i, rec in enumerate(records):
            if rec.n_frames < gap + 1 or gap < 2:
                continue
            rows.append(evaluate_clip(
                denoiser, ctrl, rec, template, gap,
                control_source=control_source, steps=steps, seed=seed,
                dilation_radius=dilation_radius, codec_patch=codec_patch,
                clip_index=i))
        if not rows:
            reports.append(MetricReport(strategy, control_source, gap, 0,
                                        float("nan"), float("nan"),
                                        float("nan"), flags=["empty"]))
            continue
        agg = lambda key: float(np.nanmean([getattr(r, key) for r in rows]))
        flags = sorted({f for r in rows for f in r.flags})
        reports.append(MetricReport(
            strategy, control_source, gap, len(rows), agg("psnr"),
            agg("psnr_bbox"), agg("psnr_mask"), flags=flags, per_clip=rows))
    # Soft trend check: mean PSNR is expected to decline with the gap.
    valid = [r for r in reports if r.n_clips > 0]
    for a, b in zip(valid, valid[1:]):
        if a.gap < b.gap and b.psnr > a.psnr + 1e-9:
            b.flags = sorted(set(b.flags) | {"psnr_not_monotonic"})
    return reports


def compare_strategies(checkpoints: dict, records, template, gaps, *,
                       control_source: str = "gt", steps: int = 16,
                       seed: int = 0, dilation_radius: int = 1) -> list:
    """Benchmark several strategy checkpoints on the same corpus/seed.

    checkpoints: {strategy_name: checkpoint path}. The checkpoint's own
    strategy must match its requested column.
    """
    from .training import load_models
    all_reports = []
    for strategy, path in checkpoints.items():
        denoiser, ctrl, cfg = load_models(path)
        ck_strategy = cfg["model"]["control"]["strategy"]
        if ck_strategy != strategy:
            raise ValueError(
                f"checkpoint {path} was trained with strategy "
                f"{ck_strategy!r}, requested column {strategy!r}")
        all_reports.extend(run_benchmark(
            denoiser, ctrl, records, template, gaps, strategy=strategy,
            control_source=control_source, steps=steps, seed=seed,
            dilation_radius=dilation_radius,
            codec_patch=cfg["model"]["codec_patch"]))
    return all_reports


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("strategy", "control_source", "gap", "n_clips", "psnr",
               "psnr_bbox", "psnr_mask", "flags")


def reports_to_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow([
                r.strategy, r.control_source, r.gap, r.n_clips,
                f"{r.psnr:.4f}", f"{r.psnr_bbox:.4f}", f"{r.psnr_mask:.4f}",
                ";".join(r.flags)])


def format_report_table(reports, *, title: str = "benchmark") -> str:
    """Text table in the ablation-table layout; perceptual-metric columns are
    placeholders (they need pretrained networks, out of scope here)."""
    lines = [title,
             f"{'strategy':<10} {'src':<4} {'gap':>4} {'clips':>5} "
             f"{'PSNR':>8} {'PSNR_bbox':>10} {'PSNR_mask':>10} "
             f"{'LPIPS':>6} {'LPIPS_bbox':>10} {'LPIPS_mask':>10}  flags"]
    for r in reports:
        lines.append(
            f"{r.strategy:<10} {r.control_source:<4} {r.gap:>4} "
            f"{r.n_clips:>5} {r.psnr:>8.2f} {r.psnr_bbox:>10.2f} "
            f"{r.psnr_mask:>10.2f} {'n/a':>6} {'n/a':>10} {'n/a':>10}  "
            f"{';'.join(r.flags)}")
        ref = REFERENCE_ROWS.get(r.strategy)
        if ref is not None:
            lines.append(
                f"  [reference, full-scale system, not reproducible here: "
                f"{r.strategy} PSNR {ref[0]:.2f} PSNR_bbox {ref[1]:.2f}]")
    return "\n".join(lines)

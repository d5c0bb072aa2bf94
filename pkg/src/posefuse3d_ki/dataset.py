"""Synthetic articulated-body video clips with full annotations.

Stand-in for a real human-video corpus: every clip is rendered from known
body parameters, so masks, boxes, keypoints and 3D params are consistent by
construction. The same validity / brightness filters that gate a real corpus
gate the generator output here.

On-disk layout (all floats as plain JSON numbers):
    <root>/corpus.json            corpus manifest (clip ids, categories)
    <root>/template.json          body template used by every clip
    <root>/<clip_id>/frames/%05d.png
    <root>/<clip_id>/mask/%05d.png
    <root>/<clip_id>/annotations.json
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .body import (BodyParams, BodyTemplate, Camera, body_state,
                   interpolate_params)
from .render import load_png, render_colored_surface, save_png

SCHEMA_VERSION = 1
SCORE_THRESHOLD = 0.3          # keypoint score below this is invalid
MAX_INVALID_KEYPOINTS = 3      # frame invalid at >= this many invalid joints
MIN_VALID_RUN = 21             # clip valid at > 20 consecutive valid frames
BRIGHTNESS_PERCENTILE = 5.0    # corpus fraction dropped by brightness filter

CATEGORIES = ("arm", "leg", "general")

# Joint-group index ranges of the default template.
_GROUPS = {
    "spine": (0, 1, 2, 3),
    "arm": (4, 5, 6, 7, 8, 9),
    "leg": (10, 11, 12, 13, 14, 15),
}


@dataclass
class MotionSpec:
    """Difficulty knobs for synthetic motion sampling."""

    n_keyposes: int = 3
    easing: str = "linear"            # "linear" | "cubic"
    amplitude: dict = field(default_factory=lambda: {
        "arm": 1.0, "leg": 0.7, "spine": 0.3, "root": 0.3})
    camera_drift: bool = False

    def __post_init__(self):
        if self.n_keyposes < 2:
            raise ValueError("n_keyposes must be >= 2")
        if self.easing not in ("linear", "cubic"):
            raise ValueError(f"unknown easing {self.easing!r}")


def spec_for_category(base: MotionSpec, category: str) -> MotionSpec:
    """Emphasize one limb group per motion category."""
    if category not in CATEGORIES:
        raise ValueError(f"unknown motion category {category!r}")
    amp = dict(base.amplitude)
    if category == "arm":
        amp["arm"] *= 1.5
        amp["leg"] *= 0.4
    elif category == "leg":
        amp["leg"] *= 1.5
        amp["arm"] *= 0.4
    return MotionSpec(base.n_keyposes, base.easing, amp, base.camera_drift)


@dataclass
class ClipRecord:
    """One fully annotated clip."""

    frames: np.ndarray       # (T, H, W, 3) float32 in [0,1]
    masks: np.ndarray        # (T, H, W) bool
    bboxes: np.ndarray       # (T, 4) int, inclusive (x0, y0, x1, y1)
    keypoints2d: np.ndarray  # (T, J, 2) float64 pixels
    scores: np.ndarray       # (T, J) float64
    params: list             # T BodyParams
    camera: Camera
    meta: dict

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


# ---------------------------------------------------------------------------
# motion sampling
# ---------------------------------------------------------------------------

def _random_params(rng: np.random.Generator, template: BodyTemplate,
                   amplitude: dict) -> BodyParams:
    J = template.n_joints
    pose = np.zeros((J, 4))
    for group, joints in _GROUPS.items():
        amp = amplitude.get(group, 0.3)
        for j in joints:
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(-amp, amp)
            half = 0.5 * angle
            pose[j, 0] = np.cos(half)
            pose[j, 1:] = np.sin(half) * axis
    amp_root = amplitude.get("root", 0.3)
    return BodyParams(
        pose=pose,
        shape=np.clip(rng.normal(0.0, 0.5, template.n_shape), -1.5, 1.5),
        expression=np.clip(rng.normal(0.0, 0.5, template.n_expression), -1.5, 1.5),
        root_translation=rng.uniform(-1.0, 1.0, 3) * amp_root * np.array([1.0, 0.7, 0.5]),
    )


def _ease(u: float, easing: str) -> float:
    if easing == "cubic":
        return u * u * (3.0 - 2.0 * u)
    return u


def sample_motion(seed: int, length: int, spec: MotionSpec,
                  template: BodyTemplate) -> list:
    """Keypose path: n_keyposes random poses interpolated with easing.

    Deterministic in `seed`. With two keyposes and linear easing, frame t is
    exactly interpolate_params(k0, k1, t / (length - 1)).
    """
    if length < 2:
        raise ValueError("clip length must be >= 2")
    rng = np.random.default_rng(seed)
    keyposes = [_random_params(rng, template, spec.amplitude)
                for _ in range(spec.n_keyposes)]
    drift = None
    if spec.camera_drift:
        drift = rng.uniform(-0.1, 0.1, (2, 3))
    times = np.linspace(0.0, length - 1.0, spec.n_keyposes)
    out = []
    for t in range(length):
        k = min(int(np.searchsorted(times, t, side="right")) - 1,
                spec.n_keyposes - 2)
        k = max(k, 0)
        u = (t - times[k]) / (times[k + 1] - times[k])
        p = interpolate_params(keyposes[k], keyposes[k + 1],
                               _ease(float(u), spec.easing))
        if drift is not None:
            w = t / (length - 1.0)
            p.root_translation = p.root_translation \
                + (1.0 - w) * drift[0] + w * drift[1]
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# clip generation
# ---------------------------------------------------------------------------

def _background(rng: np.random.Generator, resolution) -> np.ndarray:
    """Static low-frequency procedural texture in [0.08, 0.55]."""
    W, H = resolution
    ys, xs = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    img = np.zeros((H, W, 3), dtype=np.float32)
    for c in range(3):
        a, b = rng.uniform(0.02, 0.12, 2)
        phase = rng.uniform(0, 2 * np.pi)
        img[:, :, c] = 0.3 + 0.22 * np.sin(a * xs + b * ys + phase)
    return np.clip(img, 0.08, 0.55).astype(np.float32)


def _tight_bbox(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return np.zeros(4, dtype=np.int64)
    return np.array([xs.min(), ys.min(), xs.max(), ys.max()], dtype=np.int64)


def generate_clip(seed: int, spec: MotionSpec, camera: Camera,
                  template: BodyTemplate, length: int = 25, *,
                  category: str = "general", fps_tag: int = 8) -> ClipRecord:
    """Render one annotated clip; retries with derived seeds if the body
    leaves the frame entirely in any frame (up to 5 attempts)."""
    for attempt in range(5):
        s = seed + 7919 * attempt
        clip = _generate_once(s, spec, camera, template, length,
                              category, fps_tag)
        if clip is not None:
            return clip
    raise RuntimeError(
        f"body never visible in >=1 frame for seed {seed} after 5 attempts")


def _generate_once(seed, spec, camera, template, length, category, fps_tag):
    params = sample_motion(seed, length, spec, template)
    rng_bg = np.random.default_rng(seed + 1)
    bg = _background(rng_bg, camera.resolution)
    W, H = camera.resolution
    T, J = length, template.n_joints

    frames = np.empty((T, H, W, 3), dtype=np.float32)
    masks = np.empty((T, H, W), dtype=bool)
    bboxes = np.empty((T, 4), dtype=np.int64)
    keypoints = np.empty((T, J, 2))
    scores = np.empty((T, J))
    for t in range(T):
        st = body_state(params[t], template, camera)
        out = render_colored_surface(st, template, camera)
        if not out.mask.any():
            return None
        frames[t] = np.where(out.mask[:, :, None], out.color, bg)
        masks[t] = out.mask
        bboxes[t] = _tight_bbox(out.mask)
        keypoints[t] = st.joints2d
        scores[t] = (st.joint_depth > 0).astype(np.float64)
    meta = {"seed": int(seed), "motion_category": category,
            "fps_tag": int(fps_tag)}
    return ClipRecord(frames, masks, bboxes, keypoints, scores,
                      params, camera, meta)


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------

def brightness_change_score(clip: ClipRecord) -> np.ndarray:
    """Mean absolute luma difference per adjacent frame pair, shape (T-1,)."""
    luma = (0.299 * clip.frames[..., 0] + 0.587 * clip.frames[..., 1]
            + 0.114 * clip.frames[..., 2])
    return np.abs(np.diff(luma, axis=0)).mean(axis=(1, 2))


def brightness_filter(clips: list, percentile: float = BRIGHTNESS_PERCENTILE):
    """Corpus-level filter: drops the ceil(percentile%) clips whose worst
    (max) adjacent-frame brightness change is largest.

    Returns (kept indices, dropped indices), both in original order.
    """
    n = len(clips)
    if n == 0:
        return [], []
    worst = np.array([brightness_change_score(c).max() for c in clips])
    k = math.ceil(percentile / 100.0 * n)
    order = np.argsort(-worst, kind="stable")
    dropped = sorted(int(i) for i in order[:k])
    kept = [i for i in range(n) if i not in set(dropped)]
    return kept, dropped


def frame_validity(scores: np.ndarray) -> np.ndarray:
    """Frame valid iff it has fewer than MAX_INVALID_KEYPOINTS joints with
    score < SCORE_THRESHOLD. scores: (T, J) -> (T,) bool."""
    invalid = (np.asarray(scores) < SCORE_THRESHOLD).sum(axis=1)
    return invalid < MAX_INVALID_KEYPOINTS


def whole_body_validity(scores: np.ndarray) -> int:
    """Longest run of consecutive valid frames."""
    valid = frame_validity(scores)
    best = run = 0
    for v in valid:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def is_valid_clip(scores: np.ndarray) -> bool:
    """Clip valid iff it has more than 20 consecutive valid frames (>= 21)."""
    return whole_body_validity(scores) >= MIN_VALID_RUN


# ---------------------------------------------------------------------------
# crop / resize
# ---------------------------------------------------------------------------

def crop_resize(clip: ClipRecord, target_resolution) -> ClipRecord:
    """Crop around the largest annotated box at the target aspect ratio,
    then resize (bilinear frames, nearest masks); boxes, keypoints and
    camera intrinsics are rescaled consistently."""
    Wt, Ht = int(target_resolution[0]), int(target_resolution[1])
    W, H = clip.camera.resolution
    areas = ((clip.bboxes[:, 2] - clip.bboxes[:, 0] + 1)
             * (clip.bboxes[:, 3] - clip.bboxes[:, 1] + 1))
    f = int(np.argmax(areas))
    cx = 0.5 * (clip.bboxes[f, 0] + clip.bboxes[f, 2])
    cy = 0.5 * (clip.bboxes[f, 1] + clip.bboxes[f, 3])

    aspect = Wt / Ht
    if W / H >= aspect:
        crop_h = H
        crop_w = min(W, int(round(H * aspect)))
    else:
        crop_w = W
        crop_h = min(H, int(round(W / aspect)))
    x0 = int(np.clip(round(cx - crop_w / 2.0), 0, W - crop_w))
    y0 = int(np.clip(round(cy - crop_h / 2.0), 0, H - crop_h))

    sx, sy = Wt / crop_w, Ht / crop_h
    T = clip.n_frames
    frames = np.empty((T, Ht, Wt, 3), dtype=np.float32)
    masks = np.empty((T, Ht, Wt), dtype=bool)
    for t in range(T):
        sub = clip.frames[t, y0:y0 + crop_h, x0:x0 + crop_w]
        frames[t] = cv2.resize(sub, (Wt, Ht), interpolation=cv2.INTER_LINEAR)
        msub = clip.masks[t, y0:y0 + crop_h, x0:x0 + crop_w].astype(np.uint8)
        masks[t] = cv2.resize(msub, (Wt, Ht),
                              interpolation=cv2.INTER_NEAREST).astype(bool)
    bboxes = np.stack([_tight_bbox(m) for m in masks])

    kp = clip.keypoints2d.copy()
    kp[..., 0] = (kp[..., 0] - x0 + 0.5) * sx - 0.5
    kp[..., 1] = (kp[..., 1] - y0 + 0.5) * sy - 0.5

    cam = clip.camera
    camera = Camera(
        focal=(cam.focal[0] * sx, cam.focal[1] * sy),
        principal=((cam.principal[0] - x0 + 0.5) * sx - 0.5,
                   (cam.principal[1] - y0 + 0.5) * sy - 0.5),
        resolution=(Wt, Ht),
        rotation=cam.rotation.copy(),
        translation=cam.translation.copy(),
    )
    return ClipRecord(frames, masks, bboxes, kp, clip.scores.copy(),
                      [p.copy() for p in clip.params], camera,
                      dict(clip.meta))


# ---------------------------------------------------------------------------
# storage
# ---------------------------------------------------------------------------

def write_clip(clip: ClipRecord, root, clip_id: str, *,
               overwrite: bool = False) -> str:
    """Persist one clip under root/<clip_id>/ (atomic: temp dir + rename)."""
    root = str(root)
    final = os.path.join(root, clip_id)
    if os.path.exists(final):
        if not overwrite:
            raise FileExistsError(final)
        import shutil
        shutil.rmtree(final)
    tmp = os.path.join(root, f".tmp-{clip_id}")
    if os.path.exists(tmp):
        import shutil
        shutil.rmtree(tmp)
    os.makedirs(os.path.join(tmp, "frames"))
    os.makedirs(os.path.join(tmp, "mask"))
    for t in range(clip.n_frames):
        save_png(os.path.join(tmp, "frames", f"{t:05d}.png"), clip.frames[t])
        save_png(os.path.join(tmp, "mask", f"{t:05d}.png"),
                 clip.masks[t].astype(np.float32))
    ann = {
        "schema_version": SCHEMA_VERSION,
        "bboxes": clip.bboxes.tolist(),
        "keypoints2d": clip.keypoints2d.tolist(),
        "scores": clip.scores.tolist(),
        "params": [p.to_json() for p in clip.params],
        "camera": clip.camera.to_json(),
        "meta": clip.meta,
    }
    with open(os.path.join(tmp, "annotations.json"), "w") as fh:
        json.dump(ann, fh)
    os.replace(tmp, final)
    return final


def read_clip(clip_dir) -> ClipRecord:
    clip_dir = str(clip_dir)
    with open(os.path.join(clip_dir, "annotations.json")) as fh:
        ann = json.load(fh)
    if ann.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported clip schema_version "
                         f"{ann.get('schema_version')!r}")
    frame_files = sorted(os.listdir(os.path.join(clip_dir, "frames")))
    frames = np.stack([load_png(os.path.join(clip_dir, "frames", f))
                       for f in frame_files])
    masks = np.stack([load_png(os.path.join(clip_dir, "mask", f)) > 0.5
                      for f in sorted(os.listdir(os.path.join(clip_dir, "mask")))])
    return ClipRecord(
        frames=frames.astype(np.float32),
        masks=masks,
        bboxes=np.asarray(ann["bboxes"], dtype=np.int64),
        keypoints2d=np.asarray(ann["keypoints2d"], dtype=np.float64),
        scores=np.asarray(ann["scores"], dtype=np.float64),
        params=[BodyParams.from_json(p) for p in ann["params"]],
        camera=Camera.from_json(ann["camera"]),
        meta=ann["meta"],
    )


def make_split(records: list, test_fraction: float, seed: int):
    """Stratified train/test split by motion_category; deterministic.

    Each category contributes round(test_fraction * n_category) test clips,
    which keeps every category's test fraction within one clip of the global
    fraction. Returns (train indices, test indices).
    """
    by_cat: dict = {}
    for i, rec in enumerate(records):
        by_cat.setdefault(rec.meta["motion_category"], []).append(i)
    rng = np.random.default_rng(seed)
    test = []
    for cat in sorted(by_cat):
        idx = np.array(by_cat[cat])
        n_test = int(round(test_fraction * len(idx)))
        perm = rng.permutation(len(idx))
        test.extend(int(i) for i in idx[perm[:n_test]])
    test = sorted(test)
    train = [i for i in range(len(records)) if i not in set(test)]
    return train, test


# ---------------------------------------------------------------------------
# corpus generation + linting
# ---------------------------------------------------------------------------

def generate_corpus(out_dir, template: BodyTemplate, camera: Camera, *,
                    corpus_size: int, clip_length: int = 25, seed: int = 0,
                    base_spec: MotionSpec | None = None,
                    brightness_percentile: float = BRIGHTNESS_PERCENTILE,
                    categories=CATEGORIES) -> dict:
    """Generate, filter and persist a corpus; returns summary counts.

    Clips cycle through motion categories. Clips failing whole-body validity
    are regenerated under a derived seed; the brightness filter then drops
    the configured worst fraction before anything is persisted.
    """
    os.makedirs(out_dir, exist_ok=True)
    clips, ids, n_invalid = [], [], 0
    for i in range(corpus_size):
        category = categories[i % len(categories)]
        spec = spec_for_category(base_spec or MotionSpec(), category)
        clip_seed = seed + 1000 * i
        clip = generate_clip(clip_seed, spec, camera, template, clip_length,
                             category=category)
        for retry in range(5):
            if is_valid_clip(clip.scores):
                break
            n_invalid += 1
            clip = generate_clip(clip_seed + 101 + retry, spec, camera,
                                 template, clip_length, category=category)
        clips.append(clip)
        ids.append(f"clip_{i:05d}")
    kept, dropped = brightness_filter(clips, brightness_percentile)
    for i in kept:
        write_clip(clips[i], out_dir, ids[i], overwrite=True)
    template.save(os.path.join(out_dir, "template.json"))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "clips": [ids[i] for i in kept],
        "categories": [clips[i].meta["motion_category"] for i in kept],
    }
    with open(os.path.join(out_dir, "corpus.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return {"kept": len(kept), "dropped_brightness": len(dropped),
            "regenerated_invalid": n_invalid}


def load_corpus(root):
    """Read a generated corpus: returns (records, template)."""
    root = str(root)
    with open(os.path.join(root, "corpus.json")) as fh:
        manifest = json.load(fh)
    template = BodyTemplate.load(os.path.join(root, "template.json"))
    records = [read_clip(os.path.join(root, cid)) for cid in manifest["clips"]]
    return records, template


def lint_clip(clip: ClipRecord, template: BodyTemplate, *,
              atol: float = 1e-8) -> list:
    """Annotation-coherence checks; returns a list of problem strings."""
    problems = []
    if clip.n_frames < 2:
        problems.append("clip shorter than 2 frames")
    for t in range(clip.n_frames):
        box = _tight_bbox(clip.masks[t])
        if not np.array_equal(box, clip.bboxes[t]):
            problems.append(f"frame {t}: bbox not tight against mask")
        st = body_state(clip.params[t], template, clip.camera)
        if not np.allclose(st.joints2d, clip.keypoints2d[t], atol=atol):
            problems.append(f"frame {t}: keypoints do not reproject")
    return problems


def lint_corpus(root) -> dict:
    records, template = load_corpus(root)
    report = {}
    for i, rec in enumerate(records):
        probs = lint_clip(rec, template)
        if probs:
            report[i] = probs
    return report

"""Control-image renderers: colored surface, depth/normal maps, 2D skeleton.

Everything is z-buffered point splatting over the template vertices -- no
mesh faces, no anti-aliasing, bit-deterministic. In-memory images are float32
in [0, 1] (normals are signed unit vectors); `save_png` quantizes to 8 bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import raster
from .body import BodyState, BodyTemplate, Camera, blended_rotations

DEFAULT_SCORE_THRESHOLD = 0.3

# Fixed per-bone palette (distinctness is what matters, not the hues).
BONE_PALETTE = np.array([
    [1.00, 0.00, 0.00], [1.00, 0.40, 0.00], [1.00, 0.80, 0.00],
    [0.80, 1.00, 0.00], [0.40, 1.00, 0.00], [0.00, 1.00, 0.00],
    [0.00, 1.00, 0.40], [0.00, 1.00, 0.80], [0.00, 0.80, 1.00],
    [0.00, 0.40, 1.00], [0.00, 0.00, 1.00], [0.40, 0.00, 1.00],
    [0.80, 0.00, 1.00], [1.00, 0.00, 0.80], [1.00, 0.00, 0.40],
    [0.60, 0.30, 0.10], [0.30, 0.60, 0.10], [0.10, 0.30, 0.60],
    [0.70, 0.70, 0.70], [0.95, 0.95, 0.50],
], dtype=np.float32)

JOINT_COLOR = np.array([1.0, 1.0, 1.0], dtype=np.float32)

# Cull guard for degenerate projected coordinates (sentinel values etc.).
_COORD_MARGIN = 8.0


def splat_radius_for(resolution) -> int:
    """Default splat radius: 2 px at 64x64, scaled with resolution."""
    W, H = resolution
    return max(1, int(round(2.0 * min(W, H) / 64.0)))


@dataclass
class RenderOutput:
    color: np.ndarray          # (H, W, 3) float32 in [0,1]
    depth: np.ndarray          # (H, W) float32, 0 where empty
    mask: np.ndarray           # (H, W) bool
    normal: np.ndarray | None = None  # (H, W, 3) float32 unit vectors


def rasterize_points(points2d, depth, attributes, resolution, splat_radius):
    """Z-buffered splat of per-point attribute rows.

    Points behind the camera (depth <= 0) or outside the frame are culled.
    Returns (attr image (H,W,C) float32, depth (H,W) float32 0=empty,
    mask (H,W) bool).
    """
    if splat_radius < 1:
        raise ValueError("splat_radius must be >= 1")
    W, H = resolution
    points2d = np.asarray(points2d, dtype=np.float64)
    attributes = np.atleast_2d(np.asarray(attributes, dtype=np.float32))
    if attributes.shape[0] != points2d.shape[0]:
        attributes = np.broadcast_to(
            attributes, (points2d.shape[0], attributes.shape[1])).copy()
    img, zbuf = raster.splat_zbuffer(
        points2d[:, 0], points2d[:, 1], np.asarray(depth), attributes,
        H, W, float(splat_radius))
    mask = np.isfinite(zbuf)
    depth_out = np.where(mask, zbuf, np.float32(0.0))
    return img, depth_out, mask


def render_colored_surface(state: BodyState, template: BodyTemplate,
                           camera: Camera, splat_radius=None) -> RenderOutput:
    """Splat the template's unique vertex colors at the projected vertices."""
    if splat_radius is None:
        splat_radius = splat_radius_for(camera.resolution)
    color, depth, mask = rasterize_points(
        state.vertices2d, state.vertex_depth,
        template.vertex_colors.astype(np.float32),
        camera.resolution, splat_radius)
    return RenderOutput(color=color, depth=depth, mask=mask)


# -- depth / normal rendering ------------------------------------------------

_NEIGHBOR_CACHE: dict = {}
_KNN = 8


def _rest_neighbors(template: BodyTemplate) -> np.ndarray:
    """(V, k) nearest-neighbor indices in the rest mesh (cached per template)."""
    key = id(template)
    if key not in _NEIGHBOR_CACHE:
        v = template.rest_vertices
        d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(-1)
        np.fill_diagonal(d2, np.inf)
        _NEIGHBOR_CACHE[key] = np.argsort(d2, axis=1)[:, :_KNN]
    return _NEIGHBOR_CACHE[key]


def _vertex_normals(template: BodyTemplate, params, camera: Camera) -> np.ndarray:
    """Camera-facing unit normals per vertex, in the camera frame.

    Rest normals come from a PCA plane fit over rest-mesh neighbors; posing
    rotates them by the per-vertex blended skinning rotation.
    """
    nbr = _rest_neighbors(template)
    pts = template.rest_vertices[nbr]                      # (V, k, 3)
    centered = pts - pts.mean(axis=1, keepdims=True)
    cov = np.einsum("vka,vkb->vab", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]                                # smallest eigval
    rot = blended_rotations(params, template)              # (V, 3, 3)
    posed = np.einsum("vab,vb->va", rot, normals)
    cam_n = posed @ camera.rotation.T
    cam_n /= np.linalg.norm(cam_n, axis=1, keepdims=True)
    # Opaque body: visible surface faces the camera (negative camera z).
    flip = cam_n[:, 2] > 0
    cam_n[flip] *= -1.0
    return cam_n


def render_depth_normal(state: BodyState, template: BodyTemplate,
                        camera: Camera, params=None, splat_radius=None):
    """Render (normalized depth map, camera-frame normal map, mask).

    Depth is min-max normalized over mask pixels per frame; a degenerate
    depth range collapses to 0.5 inside the mask. `params` poses the rest
    normals; identity skinning rotations are used when omitted.
    """
    from .body import BodyParams
    if params is None:
        params = BodyParams.identity(template)
    if splat_radius is None:
        splat_radius = splat_radius_for(camera.resolution)
    normals = _vertex_normals(template, params, camera)
    nmap, depth, mask = rasterize_points(
        state.vertices2d, state.vertex_depth, normals.astype(np.float32),
        camera.resolution, splat_radius)
    depth01 = normalize_depth(depth, mask)
    return depth01, nmap, mask


def normalize_depth(depth: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Min-max normalize depth over mask pixels; empty -> zeros."""
    out = np.zeros_like(depth, dtype=np.float32)
    if not mask.any():
        return out
    vals = depth[mask]
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-6:
        out[mask] = 0.5
    else:
        out[mask] = (depth[mask] - lo) / (hi - lo)
    return out


# -- skeleton visualization ---------------------------------------------------

def render_pose_visualization(joints2d, scores, bones, resolution, *,
                              bone_colors=None,
                              head_cluster=(),
                              score_threshold=DEFAULT_SCORE_THRESHOLD,
                              thickness=None, joint_radius=None) -> np.ndarray:
    """DWPose-style skeleton image: colored bone segments + joint discs.

    Joints with score < score_threshold are omitted together with their
    incident bones. `head_cluster` joints are merged into a single point at
    their mean; bones internal to the cluster are dropped, bones touching it
    attach to the merged point.
    """
    W, H = resolution
    joints2d = np.asarray(joints2d, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if thickness is None:
        thickness = max(1, int(round(min(W, H) / 64.0)))
    if joint_radius is None:
        joint_radius = max(1, int(round(2.0 * min(W, H) / 64.0)))
    if bone_colors is None:
        bone_colors = BONE_PALETTE[np.arange(len(bones)) % len(BONE_PALETTE)]
    bone_colors = np.asarray(bone_colors, dtype=np.float32)

    limit = _COORD_MARGIN * max(W, H)
    visible = (scores >= score_threshold) \
        & (np.abs(joints2d) < limit).all(axis=1)

    cluster = set(int(j) for j in head_cluster)
    merged_pt = None
    if cluster:
        members = [j for j in cluster if visible[j]]
        if members:
            merged_pt = joints2d[members].mean(axis=0)

    canvas = np.zeros((H, W, 3), dtype=np.float32)
    seg = {"x0": [], "y0": [], "x1": [], "y1": [], "color": []}
    for b, (a, c) in enumerate(bones):
        in_a, in_c = a in cluster, c in cluster
        if in_a and in_c:
            continue
        pa = merged_pt if in_a else (joints2d[a] if visible[a] else None)
        pc = merged_pt if in_c else (joints2d[c] if visible[c] else None)
        if pa is None or pc is None:
            continue
        seg["x0"].append(pa[0])
        seg["y0"].append(pa[1])
        seg["x1"].append(pc[0])
        seg["y1"].append(pc[1])
        seg["color"].append(bone_colors[b])
    if seg["x0"]:
        raster.draw_segments(
            canvas,
            np.array(seg["x0"]), np.array(seg["y0"]),
            np.array(seg["x1"]), np.array(seg["y1"]),
            np.array(seg["color"], dtype=np.float32), float(thickness))

    pts_x, pts_y, pts_c = [], [], []
    for j in range(joints2d.shape[0]):
        if j in cluster or not visible[j]:
            continue
        pts_x.append(joints2d[j, 0])
        pts_y.append(joints2d[j, 1])
        pts_c.append(JOINT_COLOR)
    if merged_pt is not None:
        pts_x.append(merged_pt[0])
        pts_y.append(merged_pt[1])
        pts_c.append(JOINT_COLOR)
    if pts_x:
        raster.draw_discs(canvas, np.array(pts_x), np.array(pts_y),
                          np.array(pts_c, dtype=np.float32),
                          float(joint_radius))
    return canvas


# -- image I/O ----------------------------------------------------------------

def save_png(path, image: np.ndarray) -> None:
    """Write a float image in [0,1] as lossless 8-bit PNG (RGB or grayscale)."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    if data.ndim == 2:
        Image.fromarray(data, mode="L").save(path)
    else:
        Image.fromarray(data, mode="RGB").save(path)


def load_png(path) -> np.ndarray:
    """Read a PNG written by `save_png` back to float32 in [0,1]."""
    img = np.asarray(Image.open(path))
    return img.astype(np.float32) / 255.0

"""3D-informed control model: visual encoders, body-geometry encoder, fusion.

Three jointly trained parts produce the unified control tensor that steers
the video denoiser:

  * two (or four, with depth/normal streams) per-frame convolutional
    encoders over the rendered control images -> E2D, E3D;
  * a body-geometry encoder that lifts raw 3D joints/vertices into features
    and aggregates them onto the latent image grid with per-frame attention,
    keyed by sinusoidal embeddings of the projected 2D coordinates -> S3D;
  * a two-block coarse-to-fine fusion module (windowed self/cross attention
    + temporal attention, second block half-window shifted) -> C.

Control strategies: "ve" (visual encoding only), "ve_dn" (+ depth/normal
renders), "ve_se" (+ body-geometry encoder).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .body import BodyTemplate, Camera, body_state
from .layers import (Attention, coord_embedding, sinusoidal_embedding,
                     pad_grid, unpad_grid, window_partition, window_reverse)
from .render import (render_colored_surface, render_depth_normal,
                     render_pose_visualization)

log = logging.getLogger(__name__)

VE = "ve"
VE_DN = "ve_dn"
VE_SE = "ve_se"
STRATEGIES = (VE, VE_DN, VE_SE)


# ---------------------------------------------------------------------------
# control bundles (renderer outputs grouped per strategy)
# ---------------------------------------------------------------------------

@dataclass
class ControlBundle:
    """Per-frame control inputs for one clip."""

    pose_images: np.ndarray             # (T, H, W, 3) float32
    surface_images: np.ndarray          # (T, H, W, 3) float32
    strategy: str
    depth_images: np.ndarray | None = None    # (T, H, W, 1) iff ve_dn
    normal_images: np.ndarray | None = None   # (T, H, W, 3) iff ve_dn
    body_states: list | None = None            # T BodyState iff ve_se

    @property
    def n_frames(self) -> int:
        return self.pose_images.shape[0]

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        t, h, w = self.pose_images.shape[:3]
        if self.surface_images.shape[:3] != (t, h, w):
            raise ValueError("pose/surface image streams disagree in shape")
        has_dn = self.depth_images is not None and self.normal_images is not None
        if (self.strategy == VE_DN) != has_dn:
            raise ValueError("depth/normal streams must be present iff ve_dn")
        if has_dn and (self.depth_images.shape[:3] != (t, h, w)
                       or self.normal_images.shape[:3] != (t, h, w)):
            raise ValueError("depth/normal image streams disagree in shape")
        if (self.strategy == VE_SE) != (self.body_states is not None):
            raise ValueError("body_states must be present iff ve_se")
        if self.body_states is not None and len(self.body_states) != t:
            raise ValueError("body_states length must match frame count")


def render_bundle_from_states(states, keypoints2d, scores,
                              template: BodyTemplate, camera: Camera,
                              strategy: str, params=None) -> ControlBundle:
    """Shared render path for ground-truth and in-the-wild control bundles."""
    T = len(states)
    pose_imgs, surf_imgs = [], []
    depth_imgs, normal_imgs = [], []
    for t in range(T):
        pose_imgs.append(render_pose_visualization(
            keypoints2d[t], scores[t], template.bones, camera.resolution,
            head_cluster=template.head_cluster))
        out = render_colored_surface(states[t], template, camera)
        surf_imgs.append(out.color)
        if strategy == VE_DN:
            d01, nmap, _ = render_depth_normal(
                states[t], template, camera,
                params[t] if params is not None else None)
            depth_imgs.append(d01[:, :, None])
            normal_imgs.append(nmap)
    return ControlBundle(
        pose_images=np.stack(pose_imgs),
        surface_images=np.stack(surf_imgs),
        strategy=strategy,
        depth_images=np.stack(depth_imgs) if strategy == VE_DN else None,
        normal_images=np.stack(normal_imgs) if strategy == VE_DN else None,
        body_states=states if strategy == VE_SE else None,
    )


def build_control_bundle(clip, template: BodyTemplate,
                         strategy: str) -> ControlBundle:
    """Control bundle from a clip's stored annotations."""
    for name in ("keypoints2d", "scores", "params", "camera"):
        if getattr(clip, name, None) is None:
            raise ValueError(f"clip is missing annotation field {name!r}")
    states = [body_state(p, template, clip.camera) for p in clip.params]
    bundle = render_bundle_from_states(
        states, clip.keypoints2d, clip.scores, template, clip.camera,
        strategy, params=clip.params)
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# encoders
# ---------------------------------------------------------------------------

class VisualEncoder(nn.Module):
    """Per-frame strided conv stack: (T, C, H, W) -> (T, d, H/stride, W/stride)."""

    def __init__(self, in_channels: int, d: int, stride: int = 8):
        super().__init__()
        n_down = int(np.log2(stride))
        if 2 ** n_down != stride:
            raise ValueError("encoder stride must be a power of two")
        chans = [in_channels] + [max(d // 2, 16)] * (n_down - 1) + [d]
        layers = []
        for i in range(n_down):
            layers += [nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1),
                       nn.SiLU()]
        layers.append(nn.Conv2d(d, d, 3, padding=1))
        self.net = nn.Sequential(*layers)
        self.stride = stride

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] % self.stride or x.shape[-2] % self.stride:
            raise ValueError("input resolution not divisible by encoder stride")
        return self.net(x)


class MeshgridEncoder(nn.Module):
    """Conv-encodes a normalized 2D meshgrid into per-cell query features."""

    def __init__(self, d: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(2, d, 3, padding=1), nn.SiLU(),
            nn.Conv2d(d, d, 3, padding=1))

    def forward(self, h: int, w: int, dtype, device) -> torch.Tensor:
        ys = torch.linspace(0.0, 1.0, h, dtype=dtype, device=device)
        xs = torch.linspace(0.0, 1.0, w, dtype=dtype, device=device)
        gy, gx = torch.meshgrid(ys, xs, indexing="ij")
        grid = torch.stack([gx, gy])[None]          # (1, 2, h, w)
        q = self.net(grid)                          # (1, d, h, w)
        return q.flatten(2).transpose(1, 2)         # (1, h*w, d)


class TemporalResidualBlock(nn.Module):
    """1D temporal conv (kernel 3) + pointwise mlp, residual connection."""

    def __init__(self, d: int):
        super().__init__()
        self.conv = nn.Conv1d(d, d, 3, padding=1)
        self.act = nn.SiLU()
        self.point = nn.Conv1d(d, d, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (T, N, d); temporal mixing runs over T per element n."""
        y = x.permute(1, 2, 0)                      # (N, d, T)
        y = self.point(self.act(self.conv(y)))
        return x + y.permute(2, 0, 1)


class BodyGeometryEncoder(nn.Module):
    """Lifts raw 3D joints/vertices to features and aggregates them onto the
    latent grid with per-frame attention keyed by projected 2D positions.

    Points behind the camera are excluded from the attention; a frame whose
    points are all behind the camera falls back to a learned null embedding.
    """

    def __init__(self, d: int, heads: int = 1):
        super().__init__()
        self.d = d
        self.vertex_mlp = nn.Sequential(
            nn.Linear(3, d), nn.SiLU(), nn.Linear(d, d))
        self.joint_mlp = nn.Sequential(
            nn.Linear(3, d), nn.SiLU(), nn.Linear(d, d))
        self.joint_in = nn.Linear(d + 4, d)
        self.temporal = TemporalResidualBlock(d)
        self.query_encoder = MeshgridEncoder(d)
        self.key_proj_joint = nn.Linear(d, d)
        self.key_proj_vertex = nn.Linear(d, d)
        self.joint_attn = Attention(d, heads)
        self.vertex_attn = Attention(d, heads)
        self.down = nn.Conv2d(2 * d, d, 1)
        self.norm = nn.GroupNorm(8, d)
        self.null_embed = nn.Parameter(torch.zeros(d))

    def _keys(self, proj, coords2d, depth, resolution):
        W, H = resolution
        u = coords2d[..., 0] / max(W - 1, 1)
        v = coords2d[..., 1] / max(H - 1, 1)
        norm = torch.stack([u, v], dim=-1).clamp(-2.0, 3.0)
        keys = proj(coord_embedding(norm, self.d))
        return keys, depth > 0

    def forward(self, joints3d, vertices3d, joints2d, vertices2d,
                joint_depth, vertex_depth, pose, grid, resolution):
        """All point tensors are (T, N, *); pose is (T, J, 4) quaternions.
        Returns S3D of shape (T, d, h, w)."""
        T = joints3d.shape[0]
        h, w = grid
        vp = self.vertex_mlp(vertices3d)                       # (T, V, d)
        jf = self.joint_mlp(joints3d)                          # (T, J, d)
        vj = self.temporal(self.joint_in(torch.cat([jf, pose], dim=-1)))

        q = self.query_encoder(h, w, joints3d.dtype, joints3d.device)
        q = q.expand(T, -1, -1)                                # (T, hw, d)

        kj, jmask = self._keys(self.key_proj_joint, joints2d, joint_depth,
                               resolution)
        kp, pmask = self._keys(self.key_proj_vertex, vertices2d, vertex_depth,
                               resolution)

        dead = ~(jmask.any(dim=1) & pmask.any(dim=1))          # (T,)
        if dead.any():
            log.warning("body entirely behind camera in %d frame(s); "
                        "emitting null control embedding", int(dead.sum()))
            # Dummy all-valid masks keep softmax finite; outputs of dead
            # frames are overwritten with the null embedding below.
            jmask = torch.where(dead[:, None], torch.ones_like(jmask), jmask)
            pmask = torch.where(dead[:, None], torch.ones_like(pmask), pmask)

        oj = self.joint_attn(q, kj, vj, key_mask=jmask)        # (T, hw, d)
        op = self.vertex_attn(q, kp, vp, key_mask=pmask)
        out = torch.cat([oj, op], dim=-1)                      # (T, hw, 2d)
        if dead.any():
            null = torch.cat([self.null_embed, self.null_embed])
            out = torch.where(dead[:, None, None], null, out)
        out = out.transpose(1, 2).reshape(T, 2 * self.d, h, w)
        return self.norm(self.down(out))


# ---------------------------------------------------------------------------
# condition fusion
# ---------------------------------------------------------------------------

class FusionBlock(nn.Module):
    """One refinement block: windowed self-attention over the 3D stream,
    windowed cross-attention from the 2D stream, temporal self-attention.

    All spatial attention uses the same (optionally half-window shifted)
    partition, which keeps the block's spatial influence local.
    """

    def __init__(self, d: int, window: int, heads: int = 1,
                 shifted: bool = False, time_posenc: bool = True):
        super().__init__()
        self.window = window
        self.shift = window // 2 if shifted else 0
        self.time_posenc = time_posenc
        self.norm_self = nn.LayerNorm(d)
        self.norm_q = nn.LayerNorm(d)
        self.norm_kv = nn.LayerNorm(d)
        self.norm_t = nn.LayerNorm(d)
        self.self_attn = Attention(d, heads)
        self.cross_attn = Attention(d, heads)
        self.temporal_attn = Attention(d, heads)

    def _windowed(self, attn, q, kv):
        """q, kv: (T, h, w, d) -> same, attention inside window cells."""
        T, H, W, D = q.shape
        if self.shift:
            q = torch.roll(q, (-self.shift, -self.shift), dims=(1, 2))
            kv = torch.roll(kv, (-self.shift, -self.shift), dims=(1, 2))
        q, pads = pad_grid(q, self.window)
        kv, _ = pad_grid(kv, self.window)
        Hp, Wp = q.shape[1], q.shape[2]
        qw = window_partition(q, self.window)
        kw = window_partition(kv, self.window)
        out = attn(qw, kw)
        out = window_reverse(out, self.window, T, Hp, Wp)
        out = unpad_grid(out, pads)
        if self.shift:
            out = torch.roll(out, (self.shift, self.shift), dims=(1, 2))
        return out

    def forward(self, x: torch.Tensor, e2d: torch.Tensor) -> torch.Tensor:
        """x, e2d: (T, h, w, d) feature grids; returns (T, h, w, d)."""
        s = x + self._windowed(self.self_attn, self.norm_self(x), self.norm_self(x))
        c = e2d + self._windowed(self.cross_attn, self.norm_q(e2d),
                                 self.norm_kv(s))
        T, H, W, D = c.shape
        tok = self.norm_t(c).permute(1, 2, 0, 3).reshape(H * W, T, D)
        if self.time_posenc:
            steps = torch.arange(T, dtype=c.dtype, device=c.device) / max(T - 1, 1)
            tok = tok + sinusoidal_embedding(steps, D)[None]
        t_out = self.temporal_attn(tok, tok)
        t_out = t_out.reshape(H, W, T, D).permute(2, 0, 1, 3)
        return c + t_out


class ConditionFusion(nn.Module):
    """Two fusion blocks; the second consumes the first's output and uses the
    half-window shifted partition. The second block's output is the control
    signal."""

    def __init__(self, d: int, window: int, heads: int = 1,
                 time_posenc: bool = True):
        super().__init__()
        self.block1 = FusionBlock(d, window, heads, shifted=False,
                                  time_posenc=time_posenc)
        self.block2 = FusionBlock(d, window, heads, shifted=True,
                                  time_posenc=time_posenc)

    def forward(self, e2d, e3d, s3d=None, mode: str = "attn"):
        """All inputs (T, d, h, w); returns fused control (T, d, h, w)."""
        x = e3d if s3d is None else e3d + s3d
        if mode == "sum":                     # ablation baseline
            return e2d + x
        e2d_t = e2d.permute(0, 2, 3, 1)
        x_t = x.permute(0, 2, 3, 1)
        b1 = self.block1(x_t, e2d_t)
        b2 = self.block2(b1, e2d_t)
        return b2.permute(0, 3, 1, 2)


# ---------------------------------------------------------------------------
# full control model
# ---------------------------------------------------------------------------

@dataclass
class ControlFeatures:
    """Intermediate and fused control tensors, each (T, d, h, w)."""

    e2d: torch.Tensor
    e3d: torch.Tensor
    s3d: torch.Tensor | None
    fused: torch.Tensor


class PoseFuse3D(nn.Module):
    """Full control model producing the unified control tensor.

    frame_size is (H, W); the output grid is (H/stride, W/stride) and must
    match the denoiser's post-patch-embed grid.
    """

    def __init__(self, strategy: str = VE_SE, d: int = 64, stride: int = 8,
                 window: int = 4, heads: int = 1, frame_size=(64, 64),
                 time_posenc: bool = True):
        super().__init__()
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        H, W = frame_size
        if H % stride or W % stride:
            raise ValueError(
                f"frame size {frame_size} not divisible by stride {stride}")
        self.strategy = strategy
        self.d = d
        self.stride = stride
        self.frame_size = (H, W)
        self.grid = (H // stride, W // stride)
        self.enc_pose = VisualEncoder(3, d, stride)
        self.enc_surface = VisualEncoder(3, d, stride)
        if strategy == VE_DN:
            self.enc_depth = VisualEncoder(1, d, stride)
            self.enc_normal = VisualEncoder(3, d, stride)
        if strategy == VE_SE:
            self.body_encoder = BodyGeometryEncoder(d, heads)
        self.fusion = ConditionFusion(d, window, heads, time_posenc)

    @staticmethod
    def _to_tensor(images: np.ndarray, dtype, device) -> torch.Tensor:
        x = torch.as_tensor(np.ascontiguousarray(images), device=device)
        return x.to(dtype).permute(0, 3, 1, 2)     # (T, C, H, W)

    def prepare(self, bundle: ControlBundle, params=None, dtype=None,
                device=None) -> dict:
        """Convert a numpy bundle (+ BodyParams list for ve_se) into the
        tensor inputs of forward()."""
        bundle.validate()
        p = next(self.parameters())
        dtype = dtype or p.dtype
        device = device or p.device
        inputs = {
            "pose_images": self._to_tensor(bundle.pose_images, dtype, device),
            "surface_images": self._to_tensor(bundle.surface_images, dtype, device),
        }
        if self.strategy == VE_DN:
            inputs["depth_images"] = self._to_tensor(
                bundle.depth_images, dtype, device)
            inputs["normal_images"] = self._to_tensor(
                bundle.normal_images, dtype, device)
        if self.strategy == VE_SE:
            if params is None:
                raise ValueError("ve_se strategy requires the params list")
            sts = bundle.body_states
            stack = lambda attr: torch.as_tensor(
                np.stack([getattr(s, attr) for s in sts]),
                dtype=dtype, device=device)
            inputs.update({
                "joints3d": stack("joints3d"),
                "vertices3d": stack("vertices3d"),
                "joints2d": stack("joints2d"),
                "vertices2d": stack("vertices2d"),
                "joint_depth": stack("joint_depth"),
                "vertex_depth": stack("vertex_depth"),
                "pose_quats": torch.as_tensor(
                    np.stack([q.pose for q in params]),
                    dtype=dtype, device=device),
            })
        return inputs

    def forward(self, inputs: dict, return_features: bool = False):
        """inputs from prepare(); returns the fused control (T, d, h, w)."""
        e2d = self.enc_pose(inputs["pose_images"])
        e3d = self.enc_surface(inputs["surface_images"])
        if self.strategy == VE_DN:
            e3d = e3d + self.enc_depth(inputs["depth_images"]) \
                + self.enc_normal(inputs["normal_images"])
        s3d = None
        if self.strategy == VE_SE:
            s3d = self.body_encoder(
                inputs["joints3d"], inputs["vertices3d"], inputs["joints2d"],
                inputs["vertices2d"], inputs["joint_depth"],
                inputs["vertex_depth"], inputs["pose_quats"], self.grid,
                (self.frame_size[1], self.frame_size[0]))
        fused = self.fusion(e2d, e3d, s3d)
        if return_features:
            return ControlFeatures(e2d=e2d, e3d=e3d, s3d=s3d, fused=fused)
        return fused

    def encode_bundle(self, bundle: ControlBundle, params=None,
                      dtype=None, device=None, return_features=False):
        """Bundle (+ BodyParams list for ve_se) -> control tensor."""
        inputs = self.prepare(bundle, params=params, dtype=dtype, device=device)
        return self.forward(inputs, return_features)

"""Flow-matching video denoiser with keyframe conditioning.

The latent codec is a fixed invertible space-to-channel rearrangement (no
learned VAE), so the latent grid geometry is exact and decode(encode(x)) is
bit-identical. Diffusion follows the linear path z_t = (1-t) z + t eps; the
network regresses the path velocity eps - z and sampling is plain Euler
integration from t=1 to 0 with both endpoint keyframes supplied through
conditioning channels (and hard-overwritten after decoding).

Control features enter after the first denoiser block via cross-
normalization with a zero-initialized scalar gate, so an untrained gate is
exactly the no-control model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .layers import Attention, Mlp, sinusoidal_embedding, coord_embedding


# ---------------------------------------------------------------------------
# latent codec
# ---------------------------------------------------------------------------

def encode_latent(frames, patch: int = 4) -> torch.Tensor:
    """(T, H, W, 3) in [0,1] -> (T, 3*p*p, H/p, W/p), exactly invertible."""
    x = torch.as_tensor(frames)
    T, H, W, C = x.shape
    if H % patch or W % patch:
        raise ValueError(f"frame size ({H},{W}) not divisible by patch {patch}")
    x = x.view(T, H // patch, patch, W // patch, patch, C)
    x = x.permute(0, 5, 2, 4, 1, 3)          # (T, C, p, p, h, w)
    return x.reshape(T, C * patch * patch, H // patch, W // patch)


def decode_latent(z: torch.Tensor, patch: int = 4) -> torch.Tensor:
    """Exact inverse of encode_latent."""
    T, cpp, h, w = z.shape
    C = cpp // (patch * patch)
    x = z.view(T, C, patch, patch, h, w)
    x = x.permute(0, 4, 2, 5, 3, 1)          # (T, h, p, w, p, C)
    return x.reshape(T, h * patch, w * patch, C)


def forward_diffuse(z: torch.Tensor, eps: torch.Tensor,
                    t: torch.Tensor | float) -> torch.Tensor:
    """Linear noising path z_t = (1-t) z + t eps; t broadcasts per sample."""
    if isinstance(t, torch.Tensor) and t.ndim == 1:
        t = t.view(-1, *([1] * (z.ndim - 1)))
    return (1.0 - t) * z + t * eps


# The denoiser works on whitened latents so the data scale matches the unit
# noise; the codec itself stays exactly invertible.
LATENT_SHIFT = 0.5
LATENT_SCALE = 2.0


def to_model_space(z: torch.Tensor) -> torch.Tensor:
    return (z - LATENT_SHIFT) * LATENT_SCALE


def from_model_space(z: torch.Tensor) -> torch.Tensor:
    return z / LATENT_SCALE + LATENT_SHIFT


def make_conditioning(z: torch.Tensor, slots) -> tuple:
    """Conditioning latents + mask for keyframe slots.

    z: (B, T, c, h, w) clean latents. Returns (cond, mask) where cond copies
    z at the given time slots and is zero elsewhere; mask is (B, T, 1, h, w).
    """
    cond = torch.zeros_like(z)
    mask = torch.zeros(z.shape[0], z.shape[1], 1, z.shape[3], z.shape[4],
                       dtype=z.dtype, device=z.device)
    for s in slots:
        cond[:, s] = z[:, s]
        mask[:, s] = 1.0
    return cond, mask


# ---------------------------------------------------------------------------
# denoiser
# ---------------------------------------------------------------------------

@dataclass
class LoraConfig:
    rank: int = 32
    alpha: float = 32.0
    targets: tuple = ("patch_embed", "attn_v", "attn_out")


@dataclass
class DenoiserConfig:
    depth: int = 4
    width: int = 64
    heads: int = 4
    patch_size: int = 1
    channels: int = 48           # latent channels (3 * codec_patch**2)
    lora: LoraConfig = field(default_factory=LoraConfig)

    def validate(self):
        if self.lora.rank < 1:
            raise ValueError("LoRA rank must be >= 1")
        if self.width % self.heads:
            raise ValueError("width must be divisible by heads")


def _modulate(x, shift, scale):
    return x * (1.0 + scale) + shift


class DenoiserBlock(nn.Module):
    """Spatial attention + temporal attention + MLP, AdaLN-modulated."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(width, elementwise_affine=False)
        self.norm2 = nn.LayerNorm(width, elementwise_affine=False)
        self.norm3 = nn.LayerNorm(width, elementwise_affine=False)
        self.attn_spatial = Attention(width, heads)
        self.attn_temporal = Attention(width, heads)
        self.mlp = Mlp(width)
        self.ada = nn.Linear(width, 9 * width)
        nn.init.zeros_(self.ada.weight)
        nn.init.zeros_(self.ada.bias)

    def forward(self, x: torch.Tensor, temb: torch.Tensor) -> torch.Tensor:
        """x: (B, T, N, D) tokens; temb: (B, D)."""
        B, T, N, D = x.shape
        m = self.ada(temb).view(B, 1, 1, 9, D)
        sh_s, sc_s, g_s, sh_t, sc_t, g_t, sh_m, sc_m, g_m = m.unbind(dim=3)

        h = _modulate(self.norm1(x), sh_s, sc_s).reshape(B * T, N, D)
        h = self.attn_spatial(h, h).view(B, T, N, D)
        x = x + g_s * h

        h = _modulate(self.norm2(x), sh_t, sc_t).permute(0, 2, 1, 3)
        h = h.reshape(B * N, T, D)
        h = self.attn_temporal(h, h).view(B, N, T, D).permute(0, 2, 1, 3)
        x = x + g_t * h

        h = _modulate(self.norm3(x), sh_m, sc_m)
        x = x + g_m * self.mlp(h)
        return x


class CrossNormalization(nn.Module):
    """Control injection: renormalize control statistics to the main branch
    and add through a zero-initialized scalar gate."""

    sigma_floor = 1e-5

    def __init__(self):
        super().__init__()
        self.gamma = nn.Parameter(torch.zeros(()))

    def forward(self, h_main: torch.Tensor, c_ctrl: torch.Tensor,
                gamma=None) -> torch.Tensor:
        """h_main, c_ctrl: (B, T, N, D); stats per sample/channel over T*N."""
        dims = (1, 2)
        mu_c = c_ctrl.mean(dim=dims, keepdim=True)
        sd_c = c_ctrl.std(dim=dims, keepdim=True,
                          unbiased=False).clamp_min(self.sigma_floor)
        mu_h = h_main.mean(dim=dims, keepdim=True)
        sd_h = h_main.std(dim=dims, keepdim=True, unbiased=False)
        c_norm = (c_ctrl - mu_c) / sd_c * sd_h + mu_h
        g = self.gamma if gamma is None else gamma
        return h_main + g * c_norm


class KeyframeDenoiser(nn.Module):
    """DiT-style video denoiser over [noisy latent | cond latents | mask]."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        c, D, p = cfg.channels, cfg.width, cfg.patch_size
        self.patch_embed = nn.Conv2d(2 * c + 1, D, p, stride=p)
        self.time_mlp = nn.Sequential(nn.Linear(D, D), nn.SiLU(),
                                      nn.Linear(D, D))
        self.blocks = nn.ModuleList(
            [DenoiserBlock(D, cfg.heads) for _ in range(cfg.depth)])
        self.inject = CrossNormalization()
        self.head_norm = nn.LayerNorm(D, elementwise_affine=False)
        self.head = nn.Linear(D, p * p * c)
        nn.init.normal_(self.head.weight, std=0.02)
        nn.init.zeros_(self.head.bias)

    def _pos_embed(self, gh, gw, T, dtype, device):
        ys = torch.linspace(0.0, 1.0, gh, dtype=dtype, device=device)
        xs = torch.linspace(0.0, 1.0, gw, dtype=dtype, device=device)
        gy, gx = torch.meshgrid(ys, xs, indexing="ij")
        spatial = coord_embedding(torch.stack([gx, gy], dim=-1),
                                  self.cfg.width).view(1, 1, gh * gw, -1)
        steps = torch.arange(T, dtype=dtype, device=device) / max(T - 1, 1)
        temporal = sinusoidal_embedding(steps, self.cfg.width).view(1, T, 1, -1)
        return spatial, temporal

    def forward(self, z_t: torch.Tensor, cond: torch.Tensor,
                mask: torch.Tensor, t: torch.Tensor,
                control: torch.Tensor | None = None) -> torch.Tensor:
        """Velocity prediction, same shape as z_t (B, T, c, h, w).

        control: (B, T, D, gh, gw) on the post-patch-embed grid, or None.
        """
        B, T, c, h, w = z_t.shape
        p = self.cfg.patch_size
        x = torch.cat([z_t, cond, mask], dim=2)
        x = self.patch_embed(x.reshape(B * T, 2 * c + 1, h, w))
        gh, gw = x.shape[-2], x.shape[-1]
        x = x.flatten(2).transpose(1, 2).view(B, T, gh * gw, -1)
        spatial, temporal = self._pos_embed(gh, gw, T, x.dtype, x.device)
        x = x + spatial + temporal

        t = torch.as_tensor(t, dtype=x.dtype, device=x.device).reshape(B)
        temb = self.time_mlp(sinusoidal_embedding(t, self.cfg.width))

        for i, block in enumerate(self.blocks):
            x = block(x, temb)
            if i == 0 and control is not None:
                if control.shape[-2:] != (gh, gw):
                    raise ValueError(
                        f"control grid {tuple(control.shape[-2:])} does not "
                        f"match denoiser grid ({gh},{gw})")
                if control.shape[2] != x.shape[-1]:
                    raise ValueError("control width must equal denoiser width")
                ctrl_tok = control.flatten(3).transpose(2, 3)  # (B,T,N,D)
                x = self.inject(x, ctrl_tok)

        x = self.head(self.head_norm(x))                       # (B,T,N,p*p*c)
        x = x.view(B, T, gh, gw, p, p, c)
        x = x.permute(0, 1, 6, 2, 4, 3, 5)                     # B T c gh p gw p
        return x.reshape(B, T, c, h, w)


# ---------------------------------------------------------------------------
# LoRA
# ---------------------------------------------------------------------------

class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        self.base = base
        self.scale = alpha / rank
        self.lora_a = nn.Parameter(
            torch.randn(rank, base.in_features) / math.sqrt(base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x):
        delta = nn.functional.linear(nn.functional.linear(x, self.lora_a),
                                     self.lora_b)
        return self.base(x) + self.scale * delta

    def merge_into_base(self) -> nn.Linear:
        with torch.no_grad():
            self.base.weight += self.scale * (self.lora_b @ self.lora_a)
        return self.base


class LoRAConv2d(nn.Module):
    """LoRA on a conv treated as a linear map over flattened kernels."""

    def __init__(self, base: nn.Conv2d, rank: int, alpha: float):
        super().__init__()
        self.base = base
        self.scale = alpha / rank
        fan_in = base.in_channels * base.kernel_size[0] * base.kernel_size[1]
        self.lora_a = nn.Parameter(torch.randn(rank, fan_in) / math.sqrt(fan_in))
        self.lora_b = nn.Parameter(torch.zeros(base.out_channels, rank))

    def _delta(self):
        w = (self.lora_b @ self.lora_a).view(
            self.base.out_channels, self.base.in_channels,
            *self.base.kernel_size)
        return w

    def forward(self, x):
        delta = nn.functional.conv2d(x, self._delta(), None,
                                     self.base.stride, self.base.padding)
        return self.base(x) + self.scale * delta

    def merge_into_base(self) -> nn.Conv2d:
        with torch.no_grad():
            self.base.weight += self.scale * self._delta()
        return self.base


def _lora_target_modules(model: KeyframeDenoiser, targets) -> list:
    """(name, module) pairs matching the configured target set."""
    found = []
    for name, mod in model.named_modules():
        leaf = name.split(".")[-1]
        if "patch_embed" in targets and name == "patch_embed":
            found.append((name, mod))
        elif "attn_v" in targets and leaf == "to_v" and isinstance(mod, nn.Linear):
            found.append((name, mod))
        elif "attn_out" in targets and leaf == "out" \
                and isinstance(mod, nn.Linear) and ".attn_" in name:
            found.append((name, mod))
    return found


def _get_parent(model, name):
    parts = name.split(".")
    parent = model
    for part in parts[:-1]:
        parent = getattr(parent, part)
    return parent, parts[-1]


def apply_lora(model: KeyframeDenoiser, targets=None, rank: int = 32,
               alpha: float = 32.0) -> list:
    """Wrap target weights with zero-initialized LoRA adapters.

    Returns the wrapped module names. At initialization (B = 0) the model
    output is bit-identical to the base model.
    """
    targets = tuple(targets or model.cfg.lora.targets)
    wrapped = []
    for name, mod in _lora_target_modules(model, targets):
        parent, leaf = _get_parent(model, name)
        if isinstance(mod, nn.Conv2d):
            setattr(parent, leaf, LoRAConv2d(mod, rank, alpha))
        elif isinstance(mod, nn.Linear):
            setattr(parent, leaf, LoRALinear(mod, rank, alpha))
        else:
            raise TypeError(f"cannot LoRA-wrap {type(mod)} at {name}")
        wrapped.append(name)
    if not wrapped:
        raise ValueError(f"no modules matched LoRA targets {targets}")
    return wrapped


def merge_lora(model: KeyframeDenoiser) -> list:
    """Fold every LoRA delta into its base weight and unwrap. Returns names."""
    merged = []
    for name, mod in list(model.named_modules()):
        if isinstance(mod, (LoRALinear, LoRAConv2d)):
            parent, leaf = _get_parent(model, name)
            setattr(parent, leaf, mod.merge_into_base())
            merged.append(name)
    return merged


def lora_parameters(model: nn.Module):
    for name, param in model.named_parameters():
        if "lora_a" in name or "lora_b" in name:
            yield param


# ---------------------------------------------------------------------------
# loss + sampling
# ---------------------------------------------------------------------------

def training_loss(model, z: torch.Tensor, cond: torch.Tensor,
                  mask: torch.Tensor, control=None, *,
                  generator: torch.Generator | None = None,
                  include_conditioned: bool = True,
                  t: torch.Tensor | None = None,
                  eps: torch.Tensor | None = None) -> torch.Tensor:
    """Flow-matching MSE: E || v_hat - (eps - z) ||^2.

    t ~ U(0,1) per batch item and eps ~ N(0,I) unless supplied. With
    include_conditioned=False the keyframe slots are excluded from the mean.
    """
    B = z.shape[0]
    if t is None:
        t = torch.rand(B, generator=generator, dtype=z.dtype, device=z.device)
    if eps is None:
        eps = torch.randn(z.shape, generator=generator, dtype=z.dtype,
                          device=z.device)
    z_t = forward_diffuse(z, eps, t)
    v_hat = model(z_t, cond, mask, t, control)
    err = (v_hat - (eps - z)) ** 2
    if include_conditioned:
        return err.mean()
    keep = (1.0 - mask).expand_as(err)
    return (err * keep).sum() / keep.sum().clamp_min(1.0)


@torch.no_grad()
def sample(model, frame0: np.ndarray, frameN: np.ndarray, N: int, *,
           control=None, steps: int = 16, seed: int = 0,
           codec_patch: int = 4, dtype=torch.float32) -> np.ndarray:
    """Euler-integrate the learned velocity from t=1 to 0.

    Returns T = N+1 frames (H, W, 3) float32 in [0,1]; frames 0 and N are the
    codec-roundtripped keyframes (hard conditioning). Deterministic in seed.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    T = N + 1
    z0 = encode_latent(np.stack([frame0, frameN]), codec_patch).to(dtype)
    c, h, w = z0.shape[1:]
    full = torch.zeros(1, T, c, h, w, dtype=dtype)
    full[0, 0] = to_model_space(z0[0])
    full[0, N] = to_model_space(z0[1])
    cond, mask = make_conditioning(full, [0, N])

    g = torch.Generator().manual_seed(seed)
    z = torch.randn(1, T, c, h, w, generator=g, dtype=dtype)
    ts = torch.linspace(1.0, 0.0, steps + 1, dtype=dtype)
    for i in range(steps):
        dt = ts[i] - ts[i + 1]
        v = model(z, cond, mask, ts[i].expand(1), control)
        z = z - dt * v
    frames = decode_latent(from_model_space(z[0]), codec_patch).clamp(0.0, 1.0)
    frames = frames.float().numpy()
    frames[0] = decode_latent(z0[:1], codec_patch)[0].float().numpy()
    frames[N] = decode_latent(z0[1:], codec_patch)[0].float().numpy()
    return frames

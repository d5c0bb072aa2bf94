"""Shared neural building blocks (attention, embeddings, window partition)."""

from __future__ import annotations

import math

import torch
import torch.nn as nn


def sinusoidal_embedding(t: torch.Tensor, dim: int,
                         scale: float = 1000.0) -> torch.Tensor:
    """Sinusoidal embedding of scalar values t (...,) -> (..., dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device)
        / half)
    args = t.unsqueeze(-1) * scale * freqs
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


def coord_embedding(coords: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of 2D coordinates in [0,1]^2: (..., 2) -> (..., dim)."""
    if dim % 4 != 0:
        raise ValueError("coord embedding dim must be divisible by 4")
    quarter = dim // 4
    k = torch.arange(quarter, dtype=coords.dtype, device=coords.device)
    freqs = 2.0 * math.pi * torch.exp(k * (math.log(64.0) / max(quarter - 1, 1)))
    args = coords.unsqueeze(-1) * freqs          # (..., 2, quarter)
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)  # (..., 2, 2q)
    return emb.flatten(-2)


class Attention(nn.Module):
    """Multi-head softmax attention with optional key masking."""

    def __init__(self, dim: int, heads: int = 1):
        super().__init__()
        if dim % heads != 0:
            raise ValueError("dim must be divisible by heads")
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.to_q = nn.Linear(dim, dim)
        self.to_k = nn.Linear(dim, dim)
        self.to_v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, q_in, k_in, v_in=None, key_mask=None,
                need_weights=False):
        """q_in (B,Nq,D), k_in/v_in (B,Nk,D), key_mask (B,Nk) bool
        (True=valid). v_in defaults to k_in (ordinary self/cross attention);
        passing it separately supports distinct key and value sources."""
        if v_in is None:
            v_in = k_in
        B, Nq, D = q_in.shape
        h = self.heads
        q = self.to_q(q_in).view(B, Nq, h, -1).transpose(1, 2)
        k = self.to_k(k_in).view(B, k_in.shape[1], h, -1).transpose(1, 2)
        v = self.to_v(v_in).view(B, v_in.shape[1], h, -1).transpose(1, 2)
        logits = (q @ k.transpose(-2, -1)) * self.scale
        if key_mask is not None:
            neg = torch.finfo(logits.dtype).min
            logits = logits.masked_fill(~key_mask[:, None, None, :], neg)
        w = logits.softmax(dim=-1)
        out = (w @ v).transpose(1, 2).reshape(B, Nq, D)
        out = self.out(out)
        if need_weights:
            return out, w
        return out


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden_mult: int = 4):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden_mult * dim)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden_mult * dim, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


# -- window partition ----------------------------------------------------------

def pad_grid(x: torch.Tensor, window: int):
    """Symmetric zero-pad (B,H,W,D) so H and W are multiples of window."""
    B, H, W, D = x.shape
    ph = (-H) % window
    pw = (-W) % window
    if ph == 0 and pw == 0:
        return x, (0, 0, 0, 0)
    top, bottom = ph // 2, ph - ph // 2
    left, right = pw // 2, pw - pw // 2
    x = nn.functional.pad(x, (0, 0, left, right, top, bottom))
    return x, (top, bottom, left, right)


def unpad_grid(x: torch.Tensor, pads):
    top, bottom, left, right = pads
    H, W = x.shape[1], x.shape[2]
    return x[:, top:H - bottom or None, left:W - right or None, :]


def window_partition(x: torch.Tensor, window: int) -> torch.Tensor:
    """(B, H, W, D) -> (B * nWindows, window*window, D); H, W divisible."""
    B, H, W, D = x.shape
    x = x.view(B, H // window, window, W // window, window, D)
    x = x.permute(0, 1, 3, 2, 4, 5).contiguous()
    return x.view(-1, window * window, D)


def window_reverse(win: torch.Tensor, window: int, B: int, H: int,
                   W: int) -> torch.Tensor:
    """Inverse of window_partition."""
    D = win.shape[-1]
    x = win.view(B, H // window, W // window, window, window, D)
    x = x.permute(0, 1, 3, 2, 4, 5).contiguous()
    return x.view(B, H, W, D)

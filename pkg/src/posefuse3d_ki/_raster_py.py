"""Numpy fallback for the rasterization kernels.

Must stay output-identical to the compiled `_raster` extension: the splat
kernel casts depths to float32 before any comparison, resolves z-ties by
lowest point index, and rounds pixel coordinates with floor(x + 0.5).
"""

import numpy as np


def _paint_disc(img, cx, cy, radius, color):
    H, W = img.shape[:2]
    x0 = max(int(np.ceil(cx - radius)), 0)
    x1 = min(int(np.floor(cx + radius)), W - 1)
    y0 = max(int(np.ceil(cy - radius)), 0)
    y1 = min(int(np.floor(cy + radius)), H - 1)
    if x1 < x0 or y1 < y0:
        return
    dx = np.arange(x0, x1 + 1, dtype=np.float64) - cx
    dy = np.arange(y0, y1 + 1, dtype=np.float64) - cy
    m = dy[:, None] ** 2 + dx[None, :] ** 2 <= radius * radius
    img[y0:y1 + 1, x0:x1 + 1][m] = color


def splat_zbuffer(xs, ys, depth, attrs, H, W, radius):
    """Z-buffered disc splatting.

    Points with depth <= 0 are culled. Each surviving point paints a disc of
    its attribute row; the nearest depth wins per pixel (ties: lowest index).
    Returns (attr image (H,W,C) float32, z-buffer (H,W) float32, +inf empty).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    d32 = np.asarray(depth, dtype=np.float32)
    attrs = np.asarray(attrs, dtype=np.float32)
    C = attrs.shape[1]
    img = np.zeros((H, W, C), dtype=np.float32)
    zbuf = np.full((H, W), np.inf, dtype=np.float32)

    idx = np.nonzero(d32 > 0.0)[0]
    if idx.size == 0:
        return img, zbuf
    # Painter's order: farthest first, ties by descending index, so the
    # final writer per pixel is the nearest point with the lowest index.
    order = idx[np.lexsort((-idx, -d32[idx]))]
    r2 = float(radius) * float(radius)
    for i in order:
        u, v = xs[i], ys[i]
        x0 = max(int(np.ceil(u - radius)), 0)
        x1 = min(int(np.floor(u + radius)), W - 1)
        y0 = max(int(np.ceil(v - radius)), 0)
        y1 = min(int(np.floor(v + radius)), H - 1)
        if x1 < x0 or y1 < y0:
            continue
        dx = np.arange(x0, x1 + 1, dtype=np.float64) - u
        dy = np.arange(y0, y1 + 1, dtype=np.float64) - v
        m = dy[:, None] ** 2 + dx[None, :] ** 2 <= r2
        img[y0:y1 + 1, x0:x1 + 1][m] = attrs[i]
        zbuf[y0:y1 + 1, x0:x1 + 1][m] = d32[i]
    return img, zbuf


def draw_segments(canvas, x0s, y0s, x1s, y1s, colors, thickness):
    """Stamp aliasing-free line segments onto canvas (in place).

    Each segment is walked in max(|dx|,|dy|)+1 steps between the rounded
    endpoints; every step stamps a disc of radius `thickness`.
    """
    colors = np.asarray(colors, dtype=np.float32)
    for m in range(len(x0s)):
        ix0 = int(np.floor(x0s[m] + 0.5))
        iy0 = int(np.floor(y0s[m] + 0.5))
        ix1 = int(np.floor(x1s[m] + 0.5))
        iy1 = int(np.floor(y1s[m] + 0.5))
        n = max(abs(ix1 - ix0), abs(iy1 - iy0)) + 1
        for k in range(n):
            t = k / (n - 1) if n > 1 else 0.0
            px = int(np.floor(ix0 + t * (ix1 - ix0) + 0.5))
            py = int(np.floor(iy0 + t * (iy1 - iy0) + 0.5))
            _paint_disc(canvas, float(px), float(py), thickness, colors[m])
    return canvas


def draw_discs(canvas, xs, ys, colors, radius):
    """Stamp filled discs onto canvas (in place), in index order."""
    colors = np.asarray(colors, dtype=np.float32)
    for i in range(len(xs)):
        _paint_disc(canvas, float(xs[i]), float(ys[i]), radius, colors[i])
    return canvas

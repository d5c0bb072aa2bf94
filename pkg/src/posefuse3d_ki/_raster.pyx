# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterization kernels (z-buffer splatting, lines, discs).

Semantics must match `_raster_py` exactly; see its module docstring for the
tie-breaking and rounding rules.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor

cnp.import_array()


cdef inline int imax(int a, int b) noexcept:
    return a if a > b else b


cdef inline int imin(int a, int b) noexcept:
    return a if a < b else b


cdef void _stamp_disc(float[:, :, ::1] img, double cx, double cy,
                      double radius, const float[:] color) noexcept:
    cdef int H = img.shape[0]
    cdef int W = img.shape[1]
    cdef int C = img.shape[2]
    cdef int x0 = imax(<int>ceil(cx - radius), 0)
    cdef int x1 = imin(<int>floor(cx + radius), W - 1)
    cdef int y0 = imax(<int>ceil(cy - radius), 0)
    cdef int y1 = imin(<int>floor(cy + radius), H - 1)
    cdef int x, y, c
    cdef double dx, dy, r2 = radius * radius
    for y in range(y0, y1 + 1):
        dy = y - cy
        for x in range(x0, x1 + 1):
            dx = x - cx
            if dy * dy + dx * dx <= r2:
                for c in range(C):
                    img[y, x, c] = color[c]


def splat_zbuffer(xs, ys, depth, attrs, int H, int W, double radius):
    """Z-buffered disc splatting; see `_raster_py.splat_zbuffer`."""
    cdef double[:] xv = np.ascontiguousarray(xs, dtype=np.float64)
    cdef double[:] yv = np.ascontiguousarray(ys, dtype=np.float64)
    cdef float[:] dv = np.ascontiguousarray(depth, dtype=np.float32)
    cdef float[:, ::1] av = np.ascontiguousarray(attrs, dtype=np.float32)
    cdef int N = xv.shape[0]
    cdef int C = av.shape[1]
    img_arr = np.zeros((H, W, C), dtype=np.float32)
    zbuf_arr = np.full((H, W), np.inf, dtype=np.float32)
    cdef float[:, :, ::1] img = img_arr
    cdef float[:, ::1] zbuf = zbuf_arr
    cdef int i, x, y, c, x0, x1, y0, y1
    cdef double u, v, dx, dy, r2 = radius * radius
    cdef float d
    for i in range(N):
        d = dv[i]
        if d <= 0.0:
            continue
        u = xv[i]
        v = yv[i]
        x0 = imax(<int>ceil(u - radius), 0)
        x1 = imin(<int>floor(u + radius), W - 1)
        y0 = imax(<int>ceil(v - radius), 0)
        y1 = imin(<int>floor(v + radius), H - 1)
        for y in range(y0, y1 + 1):
            dy = y - v
            for x in range(x0, x1 + 1):
                dx = x - u
                if dy * dy + dx * dx <= r2 and d < zbuf[y, x]:
                    zbuf[y, x] = d
                    for c in range(C):
                        img[y, x, c] = av[i, c]
    return img_arr, zbuf_arr


def draw_segments(canvas, x0s, y0s, x1s, y1s, colors, double thickness):
    """Stamp line segments; see `_raster_py.draw_segments`."""
    cdef float[:, :, ::1] img = canvas
    cdef double[:] ax = np.ascontiguousarray(x0s, dtype=np.float64)
    cdef double[:] ay = np.ascontiguousarray(y0s, dtype=np.float64)
    cdef double[:] bx = np.ascontiguousarray(x1s, dtype=np.float64)
    cdef double[:] by = np.ascontiguousarray(y1s, dtype=np.float64)
    cdef float[:, ::1] cv = np.ascontiguousarray(colors, dtype=np.float32)
    cdef int M = ax.shape[0]
    cdef int m, k, n, ix0, iy0, ix1, iy1, px, py
    cdef double t
    for m in range(M):
        ix0 = <int>floor(ax[m] + 0.5)
        iy0 = <int>floor(ay[m] + 0.5)
        ix1 = <int>floor(bx[m] + 0.5)
        iy1 = <int>floor(by[m] + 0.5)
        n = imax(abs(ix1 - ix0), abs(iy1 - iy0)) + 1
        for k in range(n):
            t = (<double>k) / (n - 1) if n > 1 else 0.0
            px = <int>floor(ix0 + t * (ix1 - ix0) + 0.5)
            py = <int>floor(iy0 + t * (iy1 - iy0) + 0.5)
            _stamp_disc(img, px, py, thickness, cv[m])
    return canvas


def draw_discs(canvas, xs, ys, colors, double radius):
    """Stamp filled discs; see `_raster_py.draw_discs`."""
    cdef float[:, :, ::1] img = canvas
    cdef double[:] xv = np.ascontiguousarray(xs, dtype=np.float64)
    cdef double[:] yv = np.ascontiguousarray(ys, dtype=np.float64)
    cdef float[:, ::1] cv = np.ascontiguousarray(colors, dtype=np.float32)
    cdef int i
    for i in range(xv.shape[0]):
        _stamp_disc(img, xv[i], yv[i], radius, cv[i])
    return canvas

"""Rasterization kernel backend selection.

Prefers the compiled Cython extension; falls back to the numpy twin when the
extension was not built. Both expose the same functions with identical
outputs (covered by tests), so callers never need to care which one runs.
"""

try:
    from . import _raster as _impl
    BACKEND = "cython"
except ImportError:  # extension not built
    from . import _raster_py as _impl
    BACKEND = "numpy"

splat_zbuffer = _impl.splat_zbuffer
draw_segments = _impl.draw_segments
draw_discs = _impl.draw_discs


def get_backend() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    return BACKEND

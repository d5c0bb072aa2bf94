import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "posefuse3d_ki._raster",
                sources=["src/posefuse3d_ki/_raster.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    # No Cython available: install pure-python only, the raster backend
    # falls back to the numpy implementation at import time.
    ext_modules = []

setup(ext_modules=ext_modules)

"""Build script for the optional compiled kernel.

The package is pure Python plus one Cython extension for the per-pixel
inference loop. If Cython or a C compiler is unavailable the extension is
skipped and the numpy fallback in autolut._kernels is used instead.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext = Extension(
        "autolut._kernels._core",
        sources=["src/autolut/_kernels/_core.pyx"],
        # -ffp-contract=off keeps mul+add sequences identical to the numpy
        # fallback so both kernels produce bit-identical planes.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)

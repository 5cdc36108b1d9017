"""Builds the optional Cython kernel extension.

The package works without it (a numpy fallback is selected at import time),
so a failed compile is downgraded to a warning rather than an install error.
"""
import warnings

import numpy as np
from setuptools import setup, Extension

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "corrodet.kernels._core",
        ["src/corrodet/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    try:
        ext_modules = cythonize([ext], language_level=3)
    except Exception as exc:  # pragma: no cover - build-env dependent
        warnings.warn(f"Cython kernel build skipped: {exc}")
        ext_modules = []

setup(ext_modules=ext_modules)

import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kinefield.kernels falls back at import
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("KINEFIELD_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "kinefield._core",
                ["src/kinefield/_core.pyx"],
                include_dirs=[np.get_include()],
                # no FMA contraction: compiled and fallback kernels must agree bitwise
                extra_compile_args=["-O3", "-march=native", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
        quiet=True,
    )

setup(ext_modules=ext_modules)

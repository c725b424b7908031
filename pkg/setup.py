"""Build script for the optional compiled kernels.

The simulator works without the extension (a pure-Python fallback is
selected at import time); building it just makes full-length runs much
faster.  Set DTNSIM_PURE=1 to skip the extension build entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DTNSIM_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "dtnsim._kernels._speedups",
                    ["src/dtnsim/_kernels/_speedups.pyx"],
                    # -ffp-contract=off: the fallback and the compiled kernel
                    # must produce bit-identical doubles; FMA contraction
                    # would break that on some targets.
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

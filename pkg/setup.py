"""Build the optional compiled sweep kernels.

The package works without them: ``latgauge.kernels`` falls back to the
pure-Python implementation when the extension cannot be imported.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LATGAUGE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "latgauge._kernels",
                    ["src/latgauge/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:  # Cython or numpy missing: pure-Python fallback only
        ext_modules = []

setup(ext_modules=ext_modules)

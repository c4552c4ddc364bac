"""Build script for the optional compiled scoring kernel.

The package works without the extension: medal.kernels falls back to the
numpy implementation when the compiled module is absent. Building is
best-effort so that environments without a C toolchain can still install.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-python install
    cythonize = None

ext_modules = []
if cythonize is not None:
    extensions = [
        Extension(
            "medal._scorekern",
            sources=["src/medal/_scorekern.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)

"""Build script for the optional compiled kernel core.

The package works without the extension (a pure-Python fallback is selected
at import time); set BIDA_SKIP_EXT=1 to install without a C toolchain.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("BIDA_SKIP_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/bida/kernels/_core.pyx"],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
    )

setup(ext_modules=ext_modules)

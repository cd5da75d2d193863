"""Build script: compiles the trajectory kernel extension when Cython is available.

The package works without the extension (a pure-numpy kernel is selected at
import time); set GFSA_REQUIRE_EXTENSION=1 to turn a failed extension build
into a hard error instead of a silent fallback.
"""

import os
import sys

from setuptools import setup

REQUIRE_EXT = os.environ.get("GFSA_REQUIRE_EXTENSION", "") == "1"


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        if REQUIRE_EXT:
            raise
        print(f"gfsa: skipping compiled kernel ({exc})", file=sys.stderr)
        return []

    # The kernel draws from numpy's bit-generator C API, which lives in the
    # static npyrandom library shipped inside the numpy wheel.
    random_lib = os.path.join(os.path.dirname(np.__file__), "random", "lib")
    ext = Extension(
        "gfsa._kernel",
        sources=["src/gfsa/_kernel.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[random_lib],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=_extensions())

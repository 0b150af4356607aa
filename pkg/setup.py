"""Build script for the optional compiled quadrature kernels.

The package works without the extension: fraqhom.fracops falls back to a
vectorized numpy implementation when the compiled module is missing.  The
extension is attempted whenever Cython is importable and skipped (with a
warning) otherwise, so `pip install -e . --no-build-isolation` succeeds on
boxes without a toolchain.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "fraqhom._quad_cy",
                ["src/fraqhom/_quad_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover - exercised only on bare boxes
    print(f"fraqhom: building without compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)

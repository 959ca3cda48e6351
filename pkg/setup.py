"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so a failed compile downgrades to a warning instead
of aborting the install. Set ORDSENS_NO_EXT=1 to skip the build outright.
"""

import os
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


def _extensions():
    if os.environ.get("ORDSENS_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        print("ordsens: Cython/numpy unavailable, building without compiled kernels",
              file=sys.stderr)
        return []
    from setuptools import Extension

    ext = Extension(
        "ordsens._kernels._ckernels",
        sources=["src/ordsens/_kernels/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


class optional_build_ext(build_ext):
    """Allow the install to proceed when no C toolchain is present."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:  # noqa: BLE001
            print(f"ordsens: compiled kernels skipped ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:  # noqa: BLE001
            print(f"ordsens: building {ext.name} failed ({exc}); "
                  "falling back to pure python kernels", file=sys.stderr)


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})

"""Build script for the optional compiled kernel core.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so compilation failures downgrade to a warning
instead of aborting the install.  To force a local build:

    python setup.py build_ext --inplace
"""

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext as _build_ext


class optional_build_ext(_build_ext):
    """Build the Cython core if possible; fall back to pure numpy otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler or toolchain missing
            print(f"WARNING: compiled kernels skipped ({exc}); "
                  "ninepatch will use the numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: building {ext.name} failed ({exc}); "
                  "ninepatch will use the numpy fallback")


extensions = [
    Extension(
        "ninepatch._cykernels",
        sources=["src/ninepatch/_cykernels.pyx"],
        include_dirs=[np.get_include()],
        # -ffp-contract=off keeps float results bit-identical to the numpy
        # fallback (no fused multiply-add in the accumulation loops).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]


def _cythonized():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("WARNING: Cython not available; ninepatch will use the numpy fallback")
        return []
    return cythonize(extensions, compiler_directives={"language_level": "3"})


setup(
    ext_modules=_cythonized(),
    cmdclass={"build_ext": optional_build_ext},
)

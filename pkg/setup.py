"""Build script: compiles the optional Cython fast path.

The package works without the extension (a pure-NumPy fallback is selected
at import time), so a failed compile degrades gracefully instead of
breaking the install.
"""

import os
import sys

from setuptools import setup

PYX = "src/probegrid/backends/_core.pyx"


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("probegrid: Cython not available, installing with NumPy fallback only",
              file=sys.stderr)
        return []
    if not os.path.exists(PYX):
        return []
    from setuptools import Extension

    # -O3 without -march/-ffast-math: FMA contraction or reassociation
    # would change float results between code paths that the degenerate-
    # equivalence tests require to be bit-identical.
    ext = Extension(
        "probegrid.backends._core",
        sources=[PYX],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        language_level="3",
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=extensions())

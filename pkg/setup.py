"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time), so any failure to build it is downgraded to a warning.
"""

import warnings

from setuptools import setup


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension
    except ImportError as exc:
        warnings.warn(f"Cython/NumPy unavailable, skipping compiled kernels: {exc}")
        return []
    ext = Extension(
        "heavytail._kernels_cy",
        ["src/heavytail/_kernels_cy.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


try:
    setup(ext_modules=_extensions())
except Exception as exc:  # compiler missing on the target machine
    warnings.warn(f"compiled kernels disabled ({exc}); installing pure-Python build")
    setup(ext_modules=[])

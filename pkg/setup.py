"""Builds the optional compiled simulation core.

If Cython or a C compiler is missing the package still installs and falls
back to the pure-Python core at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("QADAPTIVE_NO_EXT", "") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext = Extension(
            "qadaptive._csim",
            ["src/qadaptive/_csim.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O2", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level=3, quiet=True)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DTWCERT_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("dtwcert._ckern", sources=["src/dtwcert/_ckern.pyx"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython: the package falls back to the numpy kernels at import time.
        ext_modules = []

setup(ext_modules=ext_modules)

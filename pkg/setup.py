"""Build script: compiles the hash kernel extension when Cython is available.

Set INKWELL_SKIP_EXT=1 to force the pure-numpy backend (the package selects
the fallback automatically at import when the extension is absent).
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("INKWELL_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "inkwell.kernels._hashcore",
                    ["src/inkwell/kernels/_hashcore.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)

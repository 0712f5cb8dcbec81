"""Build script for the optional compiled kernels.

The package works without the extension: ``spinbus.kernels`` falls back to
a vectorised numpy implementation when ``spinbus._hamkernel`` is missing.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("SPINBUS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "spinbus._hamkernel",
                    ["src/spinbus/_hamkernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

"""Build script for the optional compiled SGD kernels.

The package works without the extension (a numpy fallback is selected at
import time), so failures here should not block a source install; building
with Cython is strongly recommended for the simulation experiments.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "reuse_lab._kernels._sgd_cy",
        ["src/reuse_lab/_kernels/_sgd_cy.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))

"""Builds the optional compiled kernel extension.

The package works without it: swarmchor.kernels falls back to the pure
NumPy implementation when the extension is missing or SWARMCHOR_PURE=1.
"""
import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "swarmchor._kernels",
        ["src/swarmchor/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))

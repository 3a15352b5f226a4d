"""Builds the optional compiled LSTM kernels.

The package is fully functional without the extension: trimodal._kernels
falls back to the NumPy reference implementation when the compiled module
is absent (see src/trimodal/_kernels/__init__.py).
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from setuptools import Extension
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "trimodal._kernels._fast",
                ["src/trimodal/_kernels/_fast.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

"""Build script for the optional compiled convolution kernels.

The package is fully functional without the extension (a numpy fallback
is selected at import time); building it just makes the conv hot path
faster.  `python setup.py build_ext --inplace` compiles it in a source
checkout.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "pathroute.kernels._convext",
                ["src/pathroute/kernels/_convext.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native", "-funroll-loops", "-ffast-math", "-fno-finite-math-only"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)

import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; the numpy kernels take over
    cythonize = None

openmp = [] if os.environ.get("OQW_NO_OPENMP") else ["-fopenmp"]

extensions = []
if cythonize is not None and not os.environ.get("OQW_PURE_PYTHON"):
    extensions = cythonize(
        [
            Extension(
                "oqwlab._ckernels",
                ["src/oqwlab/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"] + openmp,
                extra_link_args=openmp,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)

import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the extension; the Python fallback is used
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("BKTLAB_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "bktlab._kernels",
                sources=["src/bktlab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

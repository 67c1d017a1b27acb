import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "csipred._kernels.synth",
                ["src/csipred/_kernels/synth.pyx"],
                include_dirs=[np.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: install pure-Python only; the numpy kernel is picked at import.
    ext_modules = []

setup(ext_modules=ext_modules)

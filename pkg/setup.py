import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernels are an optional speedup: if the extension fails to
# build, the package falls back to the numpy kernels at import time.
ext_modules = cythonize(
    [
        Extension(
            "relvae.backend._ckernels",
            ["src/relvae/backend/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
            optional=True,
        )
    ],
    language_level=3,
)

setup(ext_modules=ext_modules)

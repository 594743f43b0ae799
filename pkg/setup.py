import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

scan_ext = Extension(
    "dmsr.kernels._scan_cy",
    ["src/dmsr/kernels/_scan_cy.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    extra_compile_args=["-O3"],
)

setup(ext_modules=cythonize([scan_ext], language_level="3"))

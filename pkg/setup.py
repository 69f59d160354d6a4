import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "mswl._kernels_cy",
        ["src/mswl/_kernels_cy.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    # the package works without the extension; never fail the install over it
    ext.optional = True
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)

"""Build hook for the optional compiled kernels.

The package works without them: ``cgsnn.kernels`` falls back to numpy.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "cgsnn._kernels_cy",
                ["src/cgsnn/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
        quiet=True,
    )
except ImportError:  # no Cython or numpy at build time: pure-python install
    pass

setup(ext_modules=ext_modules)

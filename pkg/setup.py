"""Build script: compiles the optional CPN kernel extension.

The package works without the extension (a pure-Python twin of the kernels
is selected at import time); building it just makes the simulator fast.
-ffp-contract=off keeps the compiled arithmetic bit-identical to the
pure-Python fallback, which the test suite asserts.
"""
import warnings

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cpnevac._kernels._cpn_c",
                ["src/cpnevac/_kernels/_cpn_c.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O2", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError as exc:  # Cython/numpy missing: install pure-Python only
    warnings.warn(f"cpnevac: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)

"""Build script. The compiled quadrature core is optional: if Cython or a C
compiler is unavailable the package installs pure-Python and the numpy
backend is used at runtime."""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "dare.backends._quadcore",
                ["src/dare/backends/_quadcore.pyx"],
                include_dirs=[numpy.get_include()],
                # fast-math lets gcc vectorize exp/expm1/log1p through libmvec;
                # glibc's libm linker script pulls libmvec in as needed
                extra_compile_args=["-O3", "-ffast-math", "-march=native"],
                extra_link_args=["-lm"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    import sys

    sys.stderr.write("quadrature extension skipped: %s\n" % exc)

setup(ext_modules=ext_modules)

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "lofarline._native",
                ["src/lofarline/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -fno-wrapv undoes the -fwrapv in Python's default CFLAGS,
                # which otherwise blocks vectorization of the kernel loops.
                extra_compile_args=["-O3", "-ffast-math", "-march=native",
                                    "-fno-wrapv"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python kernel fallback still works without Cython.
    extensions = []

setup(ext_modules=extensions)

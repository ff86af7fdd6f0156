import os

from setuptools import Extension, setup

# DPASIM_NO_EXT=1 installs the pure-Python fallback only.
ext_modules = []
if not os.environ.get("DPASIM_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dpasim._kernel",
                ["src/dpasim/_kernel.pyx"],
                # no contraction or fast-math: results must match the Python path bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

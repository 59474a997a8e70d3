import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install, kernels fall back to numpy
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "ringsht._kernels",
                ["src/ringsht/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # no contraction into FMA: keeps the compiled and numpy paths bit-comparable
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

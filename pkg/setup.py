from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# The compiled sketch kernels are optional: without Cython (or a C compiler)
# the package falls back to the numpy implementation in sketchql._pykernels.
ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "sketchql._cmcore",
                ["src/sketchql/_cmcore.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

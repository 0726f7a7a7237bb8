from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # build without the compiled core
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "brwexplode._kernels",
                ["src/brwexplode/_kernels.pyx"],
                extra_compile_args=["-O2", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)

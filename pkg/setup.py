from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "lawlab.expr._speedups",
                ["src/lawlab/expr/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
            )
        ]
    )
except ImportError:
    # Without Cython the package still works on the pure-Python kernel.
    ext_modules = []

setup(ext_modules=ext_modules)

"""Build script for the optional compiled stepping kernel.

The package is pure Python by default; when a C compiler is available, an
accelerated integrator loop is built as allocnet._kernel, from the Cython
source if Cython is installed and from the checked-in generated C otherwise.
Installation must succeed with neither, so every failure here degrades to
the pure-Python build instead of aborting.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext

ext_modules = []
try:
    import numpy
    from setuptools.extension import Extension

    kernel_kwargs = dict(
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "allocnet._kernel",
                    sources=["src/allocnet/_kernel.pyx"],
                    **kernel_kwargs,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = [
            Extension(
                "allocnet._kernel",
                sources=["src/allocnet/_kernel.c"],
                **kernel_kwargs,
            )
        ]
except ImportError:
    ext_modules = []


class OptionalBuildExt(build_ext):
    """Treat kernel build failures as a degradation, not an install error."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"skipping compiled kernel ({exc}); using the pure-Python engine")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"skipping {ext.name} ({exc}); using the pure-Python engine")


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})

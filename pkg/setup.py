"""Build script: compiles the optional C fast path for the hot kernels.

The extension is strictly optional -- if Cython or a C compiler is missing
the install proceeds and the package falls back to the pure-Python kernels
(see clozebias.kernels). Run ``python benchmarks/bench_kernels.py`` to
compare both backends.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that degrades to the pure-Python backend on any failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        import warnings

        warnings.warn(
            "clozebias: building the C kernels failed (%s); "
            "falling back to the pure-Python implementation" % exc
        )


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    return cythonize(
        [Extension("clozebias.kernels._speed", ["src/clozebias/kernels/_speed.pyx"])],
        language_level=3,
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": optional_build_ext})

"""Build script: compiles the Cython kernel extension when possible.

The extension is optional. If Cython or a C compiler is unavailable the
package installs pure Python and selects the fallback kernels at import.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Allow the install to proceed if the extension fails to compile."""

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
        print(f"WARNING: building the fieldcast._kernels extension failed ({exc}); "
              "falling back to the pure Python kernels.")


def _extensions():
    if os.environ.get("FIELDCAST_NO_EXTENSION"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"WARNING: {exc}; skipping the compiled kernels.")
        return []
    ext = Extension(
        "fieldcast._kernels",
        ["src/fieldcast/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})

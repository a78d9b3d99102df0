import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    # the pure-Python kernels are a complete fallback, so a missing compiler is not fatal
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled core not built ({exc}); using pure-Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: {ext.name} failed to build ({exc})")


extensions = [
    Extension(
        "pinnreg._core",
        ["src/pinnreg/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

if os.environ.get("PINNREG_NO_EXT") == "1":
    extensions = []

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}) if extensions else [],
    cmdclass={"build_ext": OptionalBuildExt},
)

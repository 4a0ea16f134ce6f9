import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the compiled grid kernels if a C compiler is available.

    The package works without the extension (a NumPy fallback is selected at
    import time), so a failed compile downgrades to a warning instead of
    aborting the install.
    """

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print("WARNING: compiled kernels not built (%s); "
                  "falling back to NumPy update loops" % exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            if "-fopenmp" in ext.extra_compile_args:
                print("WARNING: OpenMP unavailable (%s); retrying serial" % exc)
                ext.extra_compile_args = [a for a in ext.extra_compile_args
                                          if a != "-fopenmp"]
                ext.extra_link_args = [a for a in ext.extra_link_args
                                       if a != "-fopenmp"]
                super().build_extension(ext)
            else:
                raise


def extensions():
    from Cython.Build import cythonize
    exts = [
        Extension(
            "emprobe._core",
            ["src/emprobe/_core.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3", "-fopenmp"],
            extra_link_args=["-fopenmp"],
        )
    ]
    return cythonize(exts, compiler_directives={"language_level": "3"})


try:
    ext_modules = extensions()
except Exception as exc:  # no Cython at build time
    print("WARNING: cythonize failed (%s); building pure-Python package" % exc)
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})

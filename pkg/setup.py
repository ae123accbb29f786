import os

from setuptools import setup

ext_modules = []
if os.environ.get("MMDDPG_NO_EXTENSION", "") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("mmddpg._kernels", ["src/mmddpg/_kernels.pyx"],
                       extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

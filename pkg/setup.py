import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LANECOOP_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("lanecoop._ckernels", ["src/lanecoop/_ckernels.pyx"],
                       include_dirs=[np.get_include()], extra_compile_args=["-O2"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)

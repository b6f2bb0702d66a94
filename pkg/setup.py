"""Build hook for the optional compiled kernels.

The package works without them; if Cython or a compiler is missing the
extension is skipped and the numpy fallback is used at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("wncs._ext.kernels", ["src/wncs/_ext/kernels.pyx"],
                   include_dirs=[np.get_include()], extra_compile_args=["-O3"],
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)

"""Builds the optional compiled convolution kernels.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a missing compiler only costs speed.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "cardioseg.kernels._convcore",
                ["src/cardioseg/kernels/_convcore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-march=native", "-ffast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)

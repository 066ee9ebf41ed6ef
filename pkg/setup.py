"""Build the optional compiled split-search kernel.

The package works without the extension (a numpy fallback is selected at
import time), so any Cython/compiler failure downgrades to a pure-Python
install instead of aborting.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("mvboost._splitcore", ["src/mvboost/_splitcore.pyx"])],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"skipping compiled kernel ({exc}); using pure-Python fallback")

setup(ext_modules=ext_modules)

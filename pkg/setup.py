from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "brwlab.sim._engine_cy",
        ["src/brwlab/sim/_engine_cy.pyx"],
        extra_compile_args=["-O3"],
    ),
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    ),
)

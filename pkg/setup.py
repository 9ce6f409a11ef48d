"""Build script for the compiled parts.

Two artifacts come out of the same C core:

  * kontext._ckontext   - Cython extension wrapping the core for in-process use
  * kontext/_preload.so - standalone shared object for LD_PRELOAD interception

Both are optional at runtime: the package falls back to the pure-Python
engine when the extension is missing, and the CLI reports a clear error when
the preload library is missing.  Build failures are therefore demoted to
warnings so a plain interpreter can still install the package.
"""

import os
import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

ROOT = Path(__file__).resolve().parent
NATIVE = ROOT / "src" / "kontext" / "native"

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - cython expected, fallback tolerated
    cythonize = None


class BuildExt(build_ext):
    """build_ext that also links the preload shared object with plain cc."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # extension is optional
            sys.stderr.write(f"warning: building kontext._ckontext failed: {exc}\n")
        self._build_preload()

    def _build_preload(self):
        try:
            ext_path = Path(self.get_ext_fullpath("kontext._ckontext"))
            out = ext_path.parent / "_preload.so"
            out.parent.mkdir(parents=True, exist_ok=True)
            cc = os.environ.get("CC", "cc")
            cmd = [
                cc,
                "-O2",
                "-g",
                "-shared",
                "-fPIC",
                "-fno-strict-aliasing",
                "-fvisibility=hidden",
                "-pthread",
                "-I",
                str(NATIVE),
                str(NATIVE / "core.c"),
                str(NATIVE / "interpose.c"),
                "-o",
                str(out),
                "-ldl",
            ]
            subprocess.run(cmd, check=True)
            # editable installs import from src/; keep a copy next to the sources
            src_copy = NATIVE.parent / "_preload.so"
            if out.resolve() != src_copy.resolve():
                shutil.copy2(out, src_copy)
        except Exception as exc:  # preload is optional for pure-python use
            sys.stderr.write(f"warning: building kontext/_preload.so failed: {exc}\n")


extensions = [
    Extension(
        "kontext._ckontext",
        sources=["src/kontext/_ckontext.pyx", "src/kontext/native/core.c"],
        include_dirs=[str(NATIVE)],
        extra_compile_args=["-O2", "-fno-strict-aliasing"],
    )
]

if cythonize is not None:
    ext_modules = cythonize(
        extensions,
        compiler_directives={"language_level": 3},
    )
else:  # pragma: no cover
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": BuildExt})

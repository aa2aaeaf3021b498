# Copyright 2026 tdsep authors
# License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
"""CMake bridge: builds the tdsep._core extension through the project's
CMakeLists.txt so the Python wheel and the native binaries share one build
definition."""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

SOURCE_DIR = Path(__file__).resolve().parent


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        out_dir = Path(self.get_ext_fullpath(ext.name)).resolve().parent
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)
        subprocess.run(
            [
                "cmake",
                "-S", str(SOURCE_DIR),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DTDSEP_PYTHON=ON",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_core", "-j"],
            check=True,
        )
        built = sorted((build_dir / "python" / "tdsep").glob("_core*"))
        if not built:
            raise RuntimeError("CMake did not produce the _core module")
        out_dir.mkdir(parents=True, exist_ok=True)
        shutil.copy2(built[-1], out_dir / built[-1].name)


setup(
    ext_modules=[CMakeExtension("tdsep._core")],
    cmdclass={"build_ext": CMakeBuild},
)

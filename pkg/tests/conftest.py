from __future__ import annotations

import io
import shutil
import subprocess
import sys
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
DEMO_SRC = FIXTURES / "demos"
SCAN_CORPUS = FIXTURES / "scancorpus"

# Canonical proxy example used throughout: one contextual key delegating to
# a two-layer template, three pattern entries including the full wildcard.
PROXY_SPEC = """\
http_proxy/*/* = default.example.com
http_proxy/eth/work = proxy.example.com
http_proxy/wlan/home = proxy.example.org

[getenv/http_proxy]
context = http_proxy/%interface%/%network%
value = default.example.com
"""

KONTEXT_CMD = [sys.executable, "-m", "kontext"]


@pytest.fixture(autouse=True)
def _clean_kontext_env(monkeypatch):
    for var in (
        "KONTEXT_SPEC",
        "KONTEXT_STATE",
        "KONTEXT_TRACE",
        "KONTEXT_STARTUP_MS",
        "KONTEXT_PRELOAD",
        "LD_PRELOAD",
    ):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def proxy_spec(tmp_path) -> Path:
    path = tmp_path / "proxy.ks"
    path.write_text(PROXY_SPEC)
    return path


@pytest.fixture
def state_file(tmp_path) -> Path:
    return tmp_path / "state.ks"


@pytest.fixture(scope="session")
def demo_bins(tmp_path_factory):
    """Compile every fixture C program once; {stem: executable path}."""
    if shutil.which("cc") is None:
        pytest.skip("no C compiler on PATH")
    outdir = tmp_path_factory.mktemp("demo-bins")
    bins = {}
    for src in sorted(DEMO_SRC.glob("*.c")):
        exe = outdir / src.stem
        subprocess.run(
            ["cc", "-O1", "-o", str(exe), str(src)],
            check=True,
            capture_output=True,
        )
        bins[src.stem] = exe
    return bins


@pytest.fixture(scope="session")
def preload_so() -> Path:
    from kontext.shim import preload_library_path

    path = preload_library_path()
    if path is None:
        pytest.skip("preload library not built")
    return path


def run_cli(*argv):
    """Run the CLI in-process; (exit_code, stdout, stderr)."""
    from kontext.cli import main

    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        try:
            code = main([str(a) for a in argv])
        except SystemExit as exc:  # argparse usage failures
            code = exc.code if isinstance(exc.code, int) else 2
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def cli():
    return run_cli

import importlib

import pytest

from swingcvx._kernels import _pykernels, compiled

BACKENDS = [pytest.param(_pykernels, id="python")]
if compiled() is not None:
    BACKENDS.append(pytest.param(compiled(), id="cython"))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def reload_kernels(monkeypatch):
    """Re-import the kernel package under a modified environment."""
    import swingcvx._kernels as pkg

    def _reload(pure: bool):
        if pure:
            monkeypatch.setenv("SWINGCVX_PURE_PYTHON", "1")
        else:
            monkeypatch.delenv("SWINGCVX_PURE_PYTHON", raising=False)
        return importlib.reload(pkg)

    yield _reload
    monkeypatch.delenv("SWINGCVX_PURE_PYTHON", raising=False)
    importlib.reload(pkg)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail, seconds)`` for the acceptance summary."""

    def record(number: int, passed: bool, detail: str, seconds: float):
        tag = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"criterion {number}: {tag} ({seconds:.1f}s) {detail}")
        print(ACCEPTANCE_LINES[-1])

    return record

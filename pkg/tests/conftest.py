import gmpy2
import pytest

from longstep.numeric import PRECISION_ENV, working_precision


def radical(expr: str, bits: int = 128):
    """Evaluate a printed radical expression such as '7+4*sqrt(2)' in mpfr."""
    with working_precision(bits):
        return eval(expr, {"__builtins__": {}}, {"sqrt": lambda x: gmpy2.sqrt(gmpy2.mpfr(x))}) * gmpy2.mpfr(1)


@pytest.fixture(autouse=True)
def _default_precision(monkeypatch):
    # tests assume the built-in policy unless they set the variable themselves
    monkeypatch.delenv(PRECISION_ENV, raising=False)


@pytest.fixture
def mp128():
    with working_precision(128):
        yield


_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line: criterion(name, ok, detail)."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        print(line)
        _CRITERIA.append((name, ok, detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

import math

import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=30)
settings.load_profile("ci")

PI2 = math.pi ** 2


@pytest.fixture
def pi2():
    return PI2


_CRITERIA: dict[int, str] = {}


class _Criterion:
    def __init__(self, number: int):
        self.number = number
        self.detail = ""

    def __enter__(self):
        import time
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time
        dt = time.perf_counter() - self._t0
        status = "PASS" if exc_type is None else "FAIL"
        why = self.detail if exc_type is None or exc_type is AssertionError else repr(exc)
        msg = f"{exc}" if exc_type is AssertionError and str(exc) else why
        _CRITERIA[self.number] = f"criterion {self.number:2d}: {status} ({dt:.1f} s) {msg}"
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])

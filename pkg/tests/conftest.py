import pytest

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def record(number: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(42)

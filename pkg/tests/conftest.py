import pytest

from bgg.model import NetworkParams

# (criterion, passed, detail) rows collected by test_acceptance.py
_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    def record(name, passed, detail=""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        return passed

    return record


@pytest.fixture
def reference():
    return NetworkParams(20, 1.0, 2.0, 1.0, 1.0)


@pytest.fixture
def micro():
    # lambda_H = 0, M = 2: the attacker needs one block and always wins
    return NetworkParams(2, 1.0, 0.0, 1.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f" -- {detail}" if detail else ""))

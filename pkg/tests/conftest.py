import pytest

from riskaverse.axioms import necessity_suite

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def necessity_report():
    # the four experiments drive the full engine; one run serves every test
    return necessity_suite()


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

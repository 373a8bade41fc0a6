import pytest

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Keep a criterion result so the terminal summary can list every verdict."""
    return _CRITERIA.append


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for result in sorted(_CRITERIA, key=lambda r: r.number):
        terminalreporter.write_line(result.line())

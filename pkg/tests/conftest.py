import pytest

from nvsense import params

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def cfg4():
    return params.default_config(4e-9)


@pytest.fixture(scope="session")
def cfg3():
    return params.default_config(3e-9)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

import warnings

import pytest

# PASS/FAIL lines collected by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(autouse=True)
def _quiet_fit_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=r".*excluded from the fit.*")
        yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

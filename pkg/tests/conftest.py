import pytest

from drawdown_dividend.freeboundary import solve
from drawdown_dividend.params import make_params

_ACCEPTANCE = []


def record_acceptance(label: str, passed: bool, detail: str) -> None:
    _ACCEPTANCE.append((label, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")


@pytest.fixture(scope="session")
def vp():
    return make_params()


@pytest.fixture(scope="session")
def fb(vp):
    return solve(vp)

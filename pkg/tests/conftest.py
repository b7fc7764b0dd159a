import pytest

from sonni.scenario import Scenario


@pytest.fixture
def small():
    return Scenario(slots=16, d=10, m=4, degree=2, seed=3).validate()


@pytest.fixture
def legacy_small():
    return Scenario(slots=16, d=10, m=0, degree=2, mode="legacy", seed=3).validate()


_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and rep.passed:
        return
    n, text = mark.args
    prev = _criteria.get(n, (True, text))
    _criteria[n] = (prev[0] and rep.passed, text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, text = _criteria[n]
        terminalreporter.write_line(f"AC{n:<2} {'PASS' if ok else 'FAIL'}  {text}")

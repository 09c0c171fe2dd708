"""Prints one PASS/FAIL line per acceptance criterion after the run."""

import pytest

_CRITERIA: dict = {}   # nodeid -> criterion label
_RESULTS: dict = {}    # criterion label -> bool


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): marks a test as an acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker:
            _CRITERIA[item.nodeid] = marker.args[0]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.nodeid in _CRITERIA:
        label = _CRITERIA[item.nodeid]
        if report.when == "call":
            _RESULTS[label] = report.passed
        elif report.failed:  # setup/teardown error counts as failure
            _RESULTS[label] = False


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, passed in _RESULTS.items():
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'}: {label}")

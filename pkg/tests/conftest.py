"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_RESULTS = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        label = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = dict(report.user_properties).get("measured", "")
        _RESULTS.append(("PASS" if report.passed else "FAIL", label, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for status, label, detail in _RESULTS:
        line = f"{status}  {label}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)

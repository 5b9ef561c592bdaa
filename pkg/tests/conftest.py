"""Shared fixtures and the acceptance report.

Tests marked ``@pytest.mark.acceptance("C<n> ...")`` get one PASS/FAIL line
each in the terminal summary.
"""

from __future__ import annotations

import pytest

_results = {}


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = getattr(report, "acceptance_label", None)
        if label is not None and _results.get(label) != "failed":
            _results[label] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        report.acceptance_label = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_results, key=lambda s: int(s.split()[0][1:])):
        verdict = "PASS" if _results[label] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}")

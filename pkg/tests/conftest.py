"""Collects acceptance outcomes and prints one line per criterion after the run."""

from __future__ import annotations

import pytest

_RANK = {"PASS": 0, "XFAIL": 1, "FAIL": 2}
_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            status = "XFAIL"
        else:
            status = "PASS" if rep.passed else "FAIL"
        label = marker.args[0]
        previous = _results.get(label, "PASS")
        _results[label] = max(previous, status, key=_RANK.__getitem__)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_results, key=lambda s: int(s.split()[0][2:])):
        status = _results[label]
        # an expected failure is still a failed criterion; it is just not a surprise
        shown = "FAIL (expected, see xfail reason)" if status == "XFAIL" else status
        terminalreporter.write_line(f"{label}: {shown}")

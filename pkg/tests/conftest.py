import re

import pytest

from acceptance_log import DETAILS, TITLES

_OUTCOMES: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        if _OUTCOMES.get(k) != "FAIL":
            _OUTCOMES[k] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(TITLES):
        status = _OUTCOMES.get(k, "NOT RUN")
        detail = DETAILS.get(k, "")
        terminalreporter.write_line(f"criterion {k} {status}: {TITLES[k]}" + (f" | {detail}" if detail else ""))

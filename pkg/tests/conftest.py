"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""
import re
from collections import defaultdict

import pytest

_OUTCOMES: dict = defaultdict(list)
_NOTES: dict = defaultdict(list)
_TITLES: dict = {}
_PATTERN = re.compile(r"test_criterion_(\d+)_(\w+?)(\[|$)")


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    m = _PATTERN.search(report.nodeid.split("::")[-1])
    if not m:
        return
    num = int(m.group(1))
    _TITLES[num] = m.group(2).replace("_", " ")
    if report.when == "call" or report.failed or report.skipped:
        _OUTCOMES[num].append(report.outcome)


@pytest.fixture
def note(request):
    """Record a measured value shown next to the criterion's summary line."""
    m = _PATTERN.search(request.node.name)

    def add(text):
        if m:
            _NOTES[int(m.group(1))].append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_OUTCOMES):
        outs = _OUTCOMES[num]
        status = "PASS" if all(o == "passed" for o in outs) else "FAIL"
        line = f"{status}  criterion {num}: {_TITLES[num]}"
        if _NOTES[num]:
            line += "  (" + "; ".join(_NOTES[num]) + ")"
        terminalreporter.write_line(line)

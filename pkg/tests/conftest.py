"""Collects acceptance results and prints one PASS/FAIL line per criterion."""

import pytest

_RESULTS = {}
_DETAILS = {}


@pytest.fixture
def acceptance_log(request):
    """Record measured values for the summary line of the running criterion."""
    key = request.node.name

    def log(text):
        _DETAILS.setdefault(key, []).append(str(text))

    return log


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or report.outcome != "passed":
        prev = _RESULTS.get(name)
        if prev != "FAIL":
            _RESULTS[name] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_RESULTS):
        number = int(name.split("_")[2])
        title = " ".join(name.split("_")[3:])
        detail = "; ".join(_DETAILS.get(name, []))
        tr.write_line(f"criterion {number:2d} {_RESULTS[name]}: {title}" + (f" [{detail}]" if detail else ""))

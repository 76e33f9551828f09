import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_outcomes: dict[int, list[bool]] = {}
_criteria: dict[str, int] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _criteria[item.nodeid] = int(mark.args[0])


def pytest_runtest_logreport(report):
    n = _criteria.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(n, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(set(_criteria.values())):
        results = _outcomes.get(n)
        status = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"Criterion {n}: {status}")

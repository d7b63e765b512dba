import pytest

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record a one-line summary for an acceptance criterion; printed at the end of the run."""
    number = request.node.get_closest_marker("criterion").args[0]
    entry = _CRITERIA.setdefault(number, {"name": request.node.name, "details": [], "outcome": None})
    return entry["details"]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"name": item.name, "details": [], "outcome": None})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            state = "FAIL" if report.skipped else "PASS"
        else:
            state = "PASS" if report.passed else "FAIL"
        if state == "FAIL":
            entry.setdefault("failed", []).append(item.name)
        if entry["outcome"] != "FAIL":
            entry["outcome"] = state


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        details = "; ".join(entry["details"])
        name = ", ".join(entry.get("failed", [])) or entry["name"]
        tr.write_line(f"criterion {number}: {entry['outcome'] or 'NOT RUN'}  {name}"
                      + (f"  [{details}]" if details else ""))

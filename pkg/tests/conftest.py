import pytest

_criteria: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        prev = _criteria.get(number, (title, "PASS"))[1]
        status = "FAIL" if failed or prev == "FAIL" else "PASS"
        if report.skipped:
            status = "SKIP"
        _criteria[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title}")

from __future__ import annotations

import pytest

# (number, title) -> (status, detail), filled by the acceptance tests
_CRITERIA: dict[tuple[int, str], tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = tuple(marker.args)
    detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    if report.skipped:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        _CRITERIA[key] = ("SKIP", reason.removeprefix("Skipped: "))
    elif report.failed:
        _CRITERIA[key] = ("FAIL", detail or report.longreprtext.strip().splitlines()[-1])
    elif report.when == "call":
        _CRITERIA[key] = ("PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), (status, detail) in sorted(_CRITERIA.items()):
        line = f"{status} [{number:>2}] {title}"
        terminalreporter.write_line(f"{line} :: {detail}" if detail else line)

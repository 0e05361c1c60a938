import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_outcomes: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = _CRITERION.match(item.name)
    if m is None:
        return
    n = int(m.group(1))
    detail = dict(item.user_properties).get("detail", "")
    if report.failed:
        _outcomes[n] = ("FAIL", m.group(2), detail)
    elif report.when == "call" and n not in _outcomes:
        _outcomes[n] = ("PASS", m.group(2), detail)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        status, name, detail = _outcomes[n]
        line = f"[{status}] criterion {n}: {name.replace('_', ' ')}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))

"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import re

import pytest

_results = {}    # key -> list of (nodeid, passed)
_titles = {}


def _major(key):
    return re.match(r"\d+", key).group()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    key, title = mark.args
    _titles.setdefault(key, title)
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _results.setdefault(key, []).append(rep.passed)


def criterion_lines():
    if not _results:
        return []
    groups = {}
    for key in _results:
        groups.setdefault(_major(key), []).append(key)
    lines = []
    for major in sorted(groups, key=int):
        keys = sorted(groups[major])
        ok = {k: all(_results[k]) for k in keys}
        status = "PASS" if all(ok.values()) else "FAIL"
        if keys == [major]:
            lines.append(f"{status}  criterion {major:>2}: {_titles[major]}")
        else:
            lines.append(f"{status}  criterion {major:>2}: qualitative checks")
            for k in keys:
                mark = "PASS" if ok[k] else "FAIL"
                lines.append(f"        {mark}  {k:<4} {_titles[k]}")
    return lines


def pytest_terminal_summary(terminalreporter):
    lines = criterion_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[str, tuple[int, str]] = {}
_outcomes: dict[str, str] = {}
_notes: dict[str, list[str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _criteria[item.nodeid] = (mark.args[0], mark.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    if report.failed:
        _outcomes[report.nodeid] = "FAIL"
    elif report.when == "call" and report.nodeid not in _outcomes:
        _outcomes[report.nodeid] = "PASS"
    if report.when != "call":
        return
    for name, text in report.user_properties:
        if name == "note":
            _notes.setdefault(report.nodeid, []).append(text)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (number, title) in sorted(_criteria.items(), key=lambda kv: kv[1][0]):
        if nodeid not in _outcomes:
            continue
        terminalreporter.write_line(f"criterion {number:2d} {_outcomes[nodeid]}  {title}")
        for note in _notes.get(nodeid, []):
            terminalreporter.write_line(f"              {note}")

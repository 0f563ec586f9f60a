"""Collects acceptance-criterion outcomes and prints one line per criterion."""
from collections import defaultdict

_outcomes = defaultdict(list)
_titles = {}
_details = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    number = props.get("criterion")
    if number is None or not (report.when == "call" or report.failed):
        return
    _outcomes[number].append(report.passed)
    _titles[number] = props["title"]
    _details[number] += [v for k, v in report.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        verdict = "PASS" if all(_outcomes[number]) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {_titles[number]}")
        for note in _details[number]:
            terminalreporter.write_line(f"              {note}")

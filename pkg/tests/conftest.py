import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_results: dict = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    # a failing setup counts against the criterion too
    if mark is None or not (call.when == "call" or (call.when == "setup" and call.excinfo)):
        return
    n, title = mark.args
    ok = call.excinfo is None
    prev = _results.get(n, (title, True))
    _results[n] = (title, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        title, ok = _results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")

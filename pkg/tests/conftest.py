import re

_CRITERION = re.compile(r"test_criterion_(\d+)")
_results: dict[int, list] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        notes = [f"{k}={v}" for k, v in report.user_properties]
        _results.setdefault(int(m.group(1)), []).append((report.outcome, notes))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        parts = _results[num]
        ok = all(outcome == "passed" for outcome, _ in parts)
        notes = "; ".join(n for _, ns in parts for n in ns)
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {notes}")

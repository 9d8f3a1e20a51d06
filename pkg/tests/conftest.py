import re

_CRITERIA = {}
_DETAILS = {}


def record_detail(number: int, text: str) -> None:
    """Attach a one-line summary to an acceptance criterion."""
    _DETAILS.setdefault(number, []).append(text)


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m or report.when not in ("setup", "call"):
        return
    n = int(m.group(1))
    ok = report.passed if report.when == "call" else not report.failed
    if report.when == "setup" and ok:
        return
    _CRITERIA[n] = _CRITERIA.get(n, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        detail = "; ".join(_DETAILS.get(n, []))
        status = "PASS" if _CRITERIA[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")

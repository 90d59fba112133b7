"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

_RESULTS: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if report.when == "call" or (report.when == "setup" and report.skipped):
        n = props.get("criterion", report.nodeid.split("criterion_")[-1].rstrip("]"))
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _RESULTS[str(n)] = (status, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS, key=lambda k: int(k)):
        status, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {int(n):2d}  {status}  {detail}")
    passed = sum(s == "PASS" for s, _ in _RESULTS.values())
    terminalreporter.write_line(f"{passed}/{len(_RESULTS)} criteria pass")

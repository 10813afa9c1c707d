"""Shared test plumbing: a terminal summary that prints one line per
acceptance criterion after the run."""

_ACCEPTANCE_RESULTS = []


def record_acceptance(number, passed, detail):
    _ACCEPTANCE_RESULTS.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status} — {detail}")

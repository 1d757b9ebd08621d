import os

from hypothesis import HealthCheck, settings

import _runs

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, in criterion order."""
    if not _runs.CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_runs.CRITERIA):
        ok, detail = _runs.CRITERIA[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")

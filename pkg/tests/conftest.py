import numpy as np
import pytest

from ipmc_hybrid.signals import Signal

ACCEPTANCE = {}
NOTES = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        verdict = "PASS" if ACCEPTANCE[name] == "passed" else "FAIL"
        detail = NOTES.get(name)
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def note(request):
    """Attach measured values to the acceptance summary line."""

    def record(text):
        NOTES[request.node.name] = text

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sig(values, rate=30.0, **kw):
    return Signal(np.asarray(values, dtype=float), rate, **kw)

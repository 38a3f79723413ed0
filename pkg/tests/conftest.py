import os
import sys

import pytest

from povmap import _accel

sys.path.insert(0, os.path.dirname(__file__))

BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])

_ACCEPTANCE = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def record_criterion():
    """Call with (label, passed, detail) to add a line to the acceptance summary."""
    def record(label, passed, detail=""):
        _ACCEPTANCE.append((label, passed, detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")

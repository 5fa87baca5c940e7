import re
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

_AC_NAME = re.compile(r"test_ac(\d+)_")
_results: dict = {}


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def record(request):
    """Attach a one-line measurement to the acceptance summary."""
    def put(text):
        request.node.user_properties.append(("summary", str(text)))
    return put


def pytest_runtest_logreport(report):
    m = _AC_NAME.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    key = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        note = "; ".join(v for k, v in report.user_properties if k == "summary")
        state = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        prev = _results.get(key)
        if prev is not None:      # several tests may share a criterion
            state = prev[0] if prev[0] != "PASS" else state
            note = "; ".join(x for x in (prev[1], note) if x)
            _results[key] = (state, note, prev[2] + report.duration)
        else:
            _results[key] = (state, note, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_results):
        state, note, secs = _results[key]
        line = f"AC{key} {state} ({secs:.1f} s)"
        if note:
            line += f" {note}"
        terminalreporter.write_line(line)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[str, dict] = {}


@pytest.fixture
def criterion(request):
    """Registers the running test as an acceptance criterion; returns a dict for measured values."""
    entry = _criteria.setdefault(request.node.nodeid, {"name": request.node.function.__doc__.strip(), "measured": {}})
    return entry["measured"]


def pytest_runtest_logreport(report):
    entry = _criteria.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["outcome"] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for entry in _criteria.values():
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(entry.get("outcome"), "FAIL")
        detail = ", ".join(f"{k}={_fmt(v)}" for k, v in entry["measured"].items())
        tr.write_line(f"{outcome}  {entry['name']}" + (f"  [{detail}]" if detail else ""))


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)

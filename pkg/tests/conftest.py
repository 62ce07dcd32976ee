import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_CRITERIA = {}


def _criterion_number(nodeid):
    name = nodeid.split("::")[-1]
    if not name.startswith("test_criterion_"):
        return None
    return int(name[len("test_criterion_"):].split("_")[0])


def pytest_runtest_logreport(report):
    num = _criterion_number(report.nodeid)
    if num is None:
        return
    state = _CRITERIA.setdefault(num, {"outcome": "PASS", "notes": []})
    if report.failed:
        state["outcome"] = "FAIL"
        crash = getattr(report.longrepr, "reprcrash", None)
        msg = crash.message if crash is not None else str(report.longrepr)
        state["notes"].append(msg.splitlines()[0][:200])
    elif report.skipped and state["outcome"] == "PASS" and report.when == "setup":
        state["outcome"] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        state = _CRITERIA[num]
        note = f"  ({state['notes'][0]})" if state["notes"] else ""
        terminalreporter.write_line(f"criterion {num:2d}: {state['outcome']}{note}")

import os
import sys
from collections import OrderedDict

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, label): acceptance criterion this test belongs to")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    crit = getattr(report, "_criterion", None)
    if crit is None:
        return
    k, label = crit
    row = _CRITERIA.setdefault(k, {"label": label, "passed": 0, "failed": 0, "failures": []})
    if report.passed:
        row["passed"] += 1
    else:
        row["failed"] += 1
        row["failures"].append(report.nodeid.split("::")[-1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result()._criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        row = _CRITERIA[k]
        status = "PASS" if row["failed"] == 0 else "FAIL"
        extra = "" if not row["failures"] else "  failing: " + ", ".join(row["failures"])
        tr.write_line(f"criterion {k:>2} {status}  {row['label']}  ({row['passed']} passed, {row['failed']} failed){extra}")

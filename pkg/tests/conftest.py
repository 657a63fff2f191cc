"""Shared pytest wiring.

The acceptance module records one verdict line per criterion; echo them in a
dedicated block at the end of the run so the checklist is visible even when
every test passes.
"""

import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None) if mod else None
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)

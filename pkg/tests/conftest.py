import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# one line per acceptance criterion, printed at the end of the session
_CRITERIA = []


@pytest.fixture
def record():
    def _record(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return passed
    return _record


def full_scale() -> bool:
    return os.environ.get("NAED_ACCEPTANCE", "").lower() == "full"


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)

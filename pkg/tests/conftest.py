import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).resolve().parents[1] / "src" / "essopt" / "data"

TWO_BUS_TEXT = """\
[meta]
base_mva 100
num_periods 2
dt_hours 1
[buses]
1 slack 1.0 1.0
2 pq 0.95 1.05
[branches]
1 2 0.01 0.1 50
[generators]
1 0 100
[loads]
2 * 10 2
"""


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def two_bus_text() -> str:
    return TWO_BUS_TEXT


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

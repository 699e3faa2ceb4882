import json
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"
CONFIGS = TESTS.parent / "configs"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def configs_dir():
    return CONFIGS


def load_json(name):
    return json.loads((FIXTURES / name).read_text())


# acceptance verdicts, one line per criterion, echoed after the run
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)

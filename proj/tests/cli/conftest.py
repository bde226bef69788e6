import json
import subprocess
from pathlib import Path

import pytest

SCHEMA = Path(__file__).resolve().parents[2] / "schemas" / "report.schema.json"


def pytest_addoption(parser):
    parser.addoption("--evade-bin", action="store", required=True, help="path to the evade executable")


@pytest.fixture(scope="session")
def evade(request):
    binary = request.config.getoption("--evade-bin")

    def run(*args):
        return subprocess.run([binary, *map(str, args)], capture_output=True, text=True)

    return run


@pytest.fixture(scope="session")
def report_schema():
    return json.loads(SCHEMA.read_text())

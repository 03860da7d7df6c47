from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from bvpoint.space import load_space

DATA = Path(__file__).resolve().parent.parent / "data"

settings.register_profile("repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def s2_path() -> Path:
    return DATA / "S2.json"


@pytest.fixture
def s2(s2_path):
    return load_space(s2_path)


@pytest.fixture
def s2_doc(s2_path) -> dict:
    return json.loads(s2_path.read_text())


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record_criterion():
    """Record one acceptance line; all lines are echoed in the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _CRITERIA.append(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


TINY = {
    "preset": "bench-10c",
    "rounds": 6,
    "warmup_rounds": 2,
    "steps_per_round": 4,
    "data": {"n": 3000},
    "partition": {"sizes": 120},
}


@pytest.fixture
def tiny_raw():
    import copy

    return copy.deepcopy(TINY)

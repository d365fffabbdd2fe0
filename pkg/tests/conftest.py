import numpy as np
import pytest

from consensus_flow.flow import LinearSystem
from consensus_flow.graph import NetworkGraph

_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion for the summary."""

    def record(label: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA.append(f"[{'PASS' if ok else 'FAIL'}] {label}" + (f" -- {detail}" if detail else ""))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def axis_pair():
    """Two agents, rows e1 and e2 of I2, b = (1, 2), joined by one edge."""
    return LinearSystem.from_rows(np.eye(2), [1.0, 2.0]), NetworkGraph.from_edges(2, [(0, 1)])


def random_state(rng, shape):
    return rng.uniform(-2.0, 2.0, size=shape)

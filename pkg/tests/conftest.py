import sys

import numpy as np
import pytest

from lscontact.grid import Grid


@pytest.fixture
def unit_grid():
    return Grid((0.0, 0.0), 1.0, 6, 6)


@pytest.fixture
def disc_grid():
    # 0.1 spacing over [-2, 2]^2, symmetric about the origin
    return Grid.from_extent(-2.0, 2.0, -2.0, 2.0, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok, detail = results[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {title}: {detail}")

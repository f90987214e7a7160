from __future__ import annotations

import numpy as np
import pytest

from tvpgls.validation import random_spd

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def spd_stack(rng, n, d, scale=1.0):
    return np.stack([random_spd(rng, d, scale) for _ in range(n)])

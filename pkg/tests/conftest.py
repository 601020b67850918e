from __future__ import annotations

import numpy as np
import pytest

from waterqr.prep import FEATURE_NAMES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def linear_data(rng, n=300, p=3, noise=1.0):
    X = rng.normal(size=(n, p))
    beta = np.arange(1, p + 1, dtype=float)
    y = 2.0 + X @ beta + noise * rng.normal(size=n)
    return X, y


def informative_lag_data(seed, n=400, informative=0):
    """One informative column among 52; the rest are pure noise."""
    r = np.random.default_rng([seed, 77])
    X = r.normal(size=(n, len(FEATURE_NAMES)))
    y = 3.0 * np.tanh(X[:, informative]) + 0.3 * r.normal(size=n)
    return X, y


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str, seconds: float) -> str:
    """Store and print one acceptance line; returns it for assertion messages."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail}; {seconds:.1f} s)"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

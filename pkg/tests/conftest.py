import numpy as np
import pytest

from crrt.empirical import Ensemble


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_pair(rng, m=4, n=6, q=500, deficient=False):
    Y = rng.normal(size=(n, q))
    if deficient:
        Y[-1] = Y[0]
    y = Ensemble(Y + 1.0, label="y")
    X = rng.normal(size=(m, n)) @ Y + 0.4 * rng.normal(size=(m, n)) @ Y**2
    X = X + 0.1 * rng.normal(size=(m, q)) + 2.0
    return y.with_data(X, "x"), y


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import NAMES, RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(NAMES):
        if number in RESULTS:
            passed, detail = RESULTS[number]
            terminalreporter.write_line(
                f"{'PASS' if passed else 'FAIL'} criterion {number} ({NAMES[number]}): {detail}")
        else:
            terminalreporter.write_line(f"SKIP criterion {number} ({NAMES[number]}): not run")

import numpy as np
import pytest

from repreli.tensor import Ensemble


def make_ensemble(m=3, n_ref=40, n_test=10, d=5, seed=0, noise=0.3):
    rng = np.random.default_rng(seed)
    base_r = rng.standard_normal((n_ref, d))
    base_t = rng.standard_normal((n_test, d))
    refs = [base_r + noise * rng.standard_normal(base_r.shape) for _ in range(m)]
    tests = [base_t + noise * rng.standard_normal(base_t.shape) for _ in range(m)]
    return Ensemble(refs, tests)


@pytest.fixture
def small_ens():
    return make_ensemble()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split("criterion ")[1]):
            terminalreporter.write_line(line)

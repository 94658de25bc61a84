import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from puprior.core import Dataset
from helpers import synthetic

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_ACCEPTANCE: list = []


class AcceptanceLog:
    """Records one verdict per acceptance criterion and fails the test on a miss."""

    def check(self, label: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} [{label}] {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert passed, line


@pytest.fixture
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_data():
    return synthetic(n=60, n_prime=60, seed=1).data


@pytest.fixture
def gaussian_2d(rng):
    return Dataset(rng.normal(size=(40, 2)), rng.normal(0.5, 1.2, size=(50, 2)))

import numpy as np
import pytest

from rjmix import Dataset, MixtureState, PriorSpec

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_prior():
    return PriorSpec(gamma=1.5, mu_a=0.5, sigma_a2=4.0, alpha=2.0, g=0.5, h=1.0, k_max=6)


@pytest.fixture
def five_points():
    return Dataset.from_values([-1.3, -0.2, 0.4, 2.1, 3.3])


@pytest.fixture
def two_component_state():
    return MixtureState.create([0.4, 0.6], [-0.5, 2.0], [0.8, 1.5], 0.7, [0, 0, 0, 1, 1])

import numpy as np
import pytest

from radar_ood.radar_sim import RadarConfig

# acceptance tests append "CRITERION n: PASS/FAIL ..." lines here
CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    CRITERIA[number] = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def radar():
    return RadarConfig()

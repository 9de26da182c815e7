import numpy as np
import pytest

from charnbreak import CharnSpec, GaussianNoise, Segmentation


@pytest.fixture
def gauss():
    return GaussianNoise()


@pytest.fixture
def iid_spec():
    return CharnSpec()


@pytest.fixture
def ar1_spec():
    return CharnSpec(trend="linear_ar", rho=(0.5,))


@pytest.fixture
def expar_spec():
    return CharnSpec(trend="expar", rho=(0.5, 0.2, 50.0), vol="exparch", theta=(0.1, 0.0025, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def seg_60_30():
    return Segmentation(60, (30,))


# one summary line per acceptance criterion, printed after the run
CRITERIA: dict[int, str] = {}


@pytest.fixture
def report():
    def record(number: int, ok: bool, detail: str) -> bool:
        CRITERIA[number] = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(CRITERIA[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])

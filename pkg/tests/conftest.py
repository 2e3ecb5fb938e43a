import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coulomb_lab.geometry import build_grid, flat_metric, warped_metric

settings.register_profile(
    "lab",
    max_examples=15,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("lab")


@pytest.fixture(scope="session")
def flat8():
    return build_grid(flat_metric(), 8, 9)


@pytest.fixture(scope="session")
def warped8():
    return build_grid(warped_metric((0.0, 1.0)), 8, 9)


@pytest.fixture(scope="session")
def flat16():
    return build_grid(flat_metric(), 16, 17)


@pytest.fixture(scope="session")
def warped16():
    return build_grid(warped_metric((0.0, 1.0)), 16, 17)


@pytest.fixture(params=["flat", "warped"], scope="session")
def grid8(request, flat8, warped8):
    return flat8 if request.param == "flat" else warped8


def random_eta(grid, rng, scale=0.3):
    from coulomb_lab.forms import project1

    eta = project1(rng.standard_normal((3, 3) + grid.shape))
    return scale * eta / np.abs(eta).max()


# acceptance lines are collected here and repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(s.split()[1].rstrip("ab:")), s)):
            terminalreporter.write_line(line)

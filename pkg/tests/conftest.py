"""Session fixtures: default parameters, the calibrated geometry, and a
production-scale coefficient grid shared by the Monte-Carlo and
acceptance tests. Building the grid costs a couple of seconds once;
tests must treat it as read-only."""
import pytest

from helpers import default_params
from cavitycool.coefficients import build_grid
from cavitycool.fields import calibrate


@pytest.fixture(scope="session")
def params():
    return default_params()


@pytest.fixture(scope="session")
def calibrated():
    return calibrate()


@pytest.fixture(scope="session")
def geom(calibrated):
    return calibrated[0]


@pytest.fixture(scope="session")
def trap(calibrated):
    return calibrated[1]


@pytest.fixture(scope="session")
def grid(params, geom):
    return build_grid(None, (48, 64, 158), params, geom)


@pytest.fixture(scope="session")
def grid_zero():
    # all cavity coefficients off: motion in the bare trap potential
    from helpers import const_grid
    return const_grid()

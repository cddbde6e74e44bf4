import pytest

from hairhom.cell import build_cell_psi
from hairhom.scenario import Scenario

# Independent high-precision values (mpmath, 30 digits) of the piecewise
# cosh/linear solution at x3 = 0 for the default parameters.
U0_A_AT_ROOT = 0.255799880549013981668
U0_B_AT_ROOT = 0.452454820529637651229  # lambda = ln(100)/4
LAMBDA_B_A001 = 1.151292546497022842009
SINK_B_A001 = 2.920655917955267145732
RHO_CELL_EPS05 = 0.282094791773878143474
# Cell mean of psi: Ewald sum and mollified-delta finite differences agree to 1e-12.
PSI_MEAN = -0.2085777932435


@pytest.fixture(scope="session")
def psi():
    return build_cell_psi()


@pytest.fixture
def default_B():
    return Scenario("distinguished", a_eps=0.01)


@pytest.fixture
def default_A():
    return Scenario("standard", a_eps=0.01)

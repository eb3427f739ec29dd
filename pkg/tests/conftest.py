import numpy as np
import pytest

from volexec.cost import MarketParams
from volexec.grids import build_grid
from volexec.strategies import Strategy
from volexec.volume import GbmVolumeModel, arcsine_profile, constant_profile


@pytest.fixture
def market():
    # low-vol reference market used throughout
    return MarketParams(kappa=0.1, kappa_tilde=0.02, sigma_tilde=0.1, s0=100.0)


@pytest.fixture
def market_hi():
    # same impact coefficients, doubled volatility
    return MarketParams(kappa=0.1, kappa_tilde=0.02, sigma_tilde=0.2, s0=100.0)


@pytest.fixture
def gbm_model():
    return GbmVolumeModel(v0=1.0, mu=-0.02, sigma=0.2, rho=0.0)


@pytest.fixture
def grid200():
    return build_grid(1.0, 200)


@pytest.fixture
def grid500():
    return build_grid(1.0, 500)


@pytest.fixture
def arcsine500(grid500):
    return arcsine_profile(grid500)


@pytest.fixture
def const200(grid200):
    return constant_profile(grid200, 1.0)


def make_twap(grid, Phi=1.0):
    return Strategy(grid=grid, zeta=np.full(len(grid), Phi / grid.T), Phi=Phi)


@pytest.fixture
def twap200(grid200):
    return make_twap(grid200)

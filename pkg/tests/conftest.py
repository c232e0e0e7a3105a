import pytest

from hrpricer import GridSpec, ModelParams, VolatilityFn, extract, solve

DESK = ModelParams(r=0.05, lam=1.0, K=100.0, T=1.0)
SMILE = VolatilityFn.hobson_rogers(0.2, 1.0, 0.4)
FLAT = VolatilityFn.constant(0.2)


@pytest.fixture(scope="session")
def desk():
    return DESK


@pytest.fixture(scope="session")
def smile():
    return SMILE


@pytest.fixture(scope="session")
def flat():
    return FLAT


@pytest.fixture(scope="session")
def smile_surface():
    return solve(DESK, SMILE, GridSpec.for_model(DESK, SMILE, n_cells=128, n_t=256))


@pytest.fixture(scope="session")
def flat_surface():
    return solve(DESK, FLAT, GridSpec.for_model(DESK, FLAT, n_cells=128, n_t=256))


@pytest.fixture(scope="session")
def smile_boundary(smile_surface):
    return extract(smile_surface)


@pytest.fixture(scope="session")
def flat_boundary(flat_surface):
    return extract(flat_surface)

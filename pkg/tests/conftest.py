import pytest

from bb84rate.rate_engine import RateParams

REFERENCE_BETA = 0.642243


@pytest.fixture
def reference_params():
    """Reference instance: p1 = p2 = 0.05, eps = 1e-2, n = 1e8."""
    return RateParams(0.05, 0.05, 1e-2, REFERENCE_BETA, 1e8)

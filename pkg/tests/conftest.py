import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from harperkit.params import Frequency, Potential

settings.register_profile(
    "harperkit", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("harperkit")


@pytest.fixture(scope="session")
def golden():
    return Frequency.golden()


@pytest.fixture(scope="session")
def amo1():
    return Potential.cosine(1.0)


@pytest.fixture(scope="session")
def amo05():
    return Potential.cosine(0.5)


@pytest.fixture(scope="session")
def zero():
    return Potential.zero()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

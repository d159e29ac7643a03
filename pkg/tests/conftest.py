import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from iesched.core import DayProfile, PriceBook, SystemConfig
from iesched.data import ErrorSpec, ProfileSpec, generate_base_days, sample_errors

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def prices():
    return PriceBook()


@pytest.fixture(scope="session")
def days():
    return generate_base_days(ProfileSpec(), 40, seed=11)


@pytest.fixture(scope="session")
def day(days):
    return days[0]


@pytest.fixture(scope="session")
def error_pool():
    return sample_errors(ErrorSpec(), 60, seed=12)


def random_profile(rng, T=24, scale=1.0):
    L_E = rng.uniform(250, 700, T) * scale
    W = rng.uniform(0, 120, T)
    PV = rng.uniform(0, 120, T)
    return DayProfile(L_E, rng.uniform(100, 450, T) * scale, W, PV)

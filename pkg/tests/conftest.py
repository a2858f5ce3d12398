import pytest
from hypothesis import HealthCheck, settings

from membrane import systems

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300)
settings.load_profile("default")


@pytest.fixture(scope="session")
def pc2():
    return systems.load("pc2")


@pytest.fixture(scope="session")
def sync():
    return systems.load("sync")


@pytest.fixture(scope="session")
def doubling():
    return systems.load("doubling")


@pytest.fixture(scope="session")
def random_specs():
    from membrane.generate import corpus
    return corpus(200)

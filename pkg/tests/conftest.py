from importlib.resources import files

import pytest
from hypothesis import HealthCheck, settings

from rcpricing.tree import ScenarioTree

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def example1() -> ScenarioTree:
    return ScenarioTree.load(files("rcpricing.data") / "example1.json")


@pytest.fixture(scope="session")
def example2() -> ScenarioTree:
    return ScenarioTree.load(files("rcpricing.data") / "example2.json")

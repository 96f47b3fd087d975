import pytest

from contextguard.config import default_config
from contextguard.scanner import Ruleset


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def ruleset():
    return Ruleset.default()

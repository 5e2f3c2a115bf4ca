import pytest

from rolefuse.data_model import ROLES


@pytest.fixture
def roles():
    return ROLES

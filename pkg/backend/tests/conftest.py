import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.systems import build_cantor, build_cat_map, build_family_A, build_family_B, build_line, build_system


# Family builds are the slow part of the suite; share them across modules
@pytest.fixture(scope="session")
def family_b4():
    return build_family_B(4)


@pytest.fixture(scope="session")
def family_a2():
    return build_family_A(2)


@pytest.fixture(scope="session")
def family_a_system():
    return build_system("family-a", m_max=4)


@pytest.fixture(scope="session")
def cat_map():
    return build_cat_map()


@pytest.fixture(scope="session")
def cat_system():
    return build_system("cat-map")


@pytest.fixture(scope="session")
def cantor():
    return build_cantor()


@pytest.fixture(scope="session")
def line():
    return build_line(1)


@pytest.fixture(scope="session")
def client():
    return TestClient(app)

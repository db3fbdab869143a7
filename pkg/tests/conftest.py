import pytest

from avgsim.graphgen import generate_clustered_regular


@pytest.fixture(scope="session")
def g16():
    return generate_clustered_regular(16, 5, 1, seed=3)


@pytest.fixture(scope="session")
def g64():
    return generate_clustered_regular(64, 8, 1, seed=11)


@pytest.fixture(scope="session")
def g500():
    return generate_clustered_regular(500, 50, 5, seed=11)

import numpy as np
import pytest

from aet2d.mesh import generate_disk_mesh


@pytest.fixture(scope="session")
def mesh200():
    return generate_disk_mesh(200)


@pytest.fixture(scope="session")
def mesh500():
    return generate_disk_mesh(500)


@pytest.fixture(scope="session")
def mesh2000():
    return generate_disk_mesh(2000)


@pytest.fixture(scope="session")
def fine3000():
    return generate_disk_mesh(3000)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240901)

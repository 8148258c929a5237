import numpy as np
import pytest

from levyflow.basis import build_basis


@pytest.fixture(scope="session")
def torus8():
    return build_basis("torus_fourier", 8, 32, 2)


@pytest.fixture(scope="session")
def torus16():
    return build_basis("torus_fourier", 16, 32, 2)


@pytest.fixture(scope="session")
def stokes4():
    return build_basis("dirichlet_stokes", 4, 33, 2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)

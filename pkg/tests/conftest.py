import numpy as np
import pytest

from decaychar import spectral, system
from decaychar.spectral import GridConfig

spectral.set_workers(2)


@pytest.fixture(scope="session")
def grid1d():
    return GridConfig(d=1, N=4096, box_scale=256)


@pytest.fixture(scope="session")
def grid1d_small():
    return GridConfig(d=1, N=256, box_scale=8)


@pytest.fixture(scope="session")
def grid2d_small():
    return GridConfig(d=2, N=128, box_scale=8)


@pytest.fixture(scope="session")
def euler1d():
    return system.euler1d_spec()


@pytest.fixture(scope="session")
def euler2d():
    return system.euler2d_spec()


def random_normal_form(rng: np.random.Generator, d: int, n1: int, n2: int):
    """A valid random system: symmetric fluxes with zero conservative block,
    SPD dissipation."""
    n = n1 + n2
    A = []
    for _ in range(d):
        M = rng.normal(size=(n, n))
        M = 0.5 * (M + M.T)
        M[:n1, :n1] = 0.0
        A.append(M)
    B = rng.normal(size=(n2, n2))
    D = B @ B.T + 0.5 * np.eye(n2)
    return system.validate(A, D, d=d, n1=n1, n2=n2, name="random")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

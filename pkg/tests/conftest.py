import numpy as np
import pytest

from fundata.simulation import ClusterSpec, make_basis, simulate_kl

GRID = np.linspace(0, 1, 101)


@pytest.fixture
def grid():
    return GRID.copy()


@pytest.fixture
def kl_small():
    basis = make_basis("wiener", 3, GRID)
    return simulate_kl(basis, "exponential", 50, seed=3)


def two_cluster_sim(n_obs=200, seed=0, scale=3.0):
    """Two well separated groups built from the Wiener basis."""
    basis = make_basis("wiener", 3, GRID)
    centers = scale * np.array([[2, -1], [-0.5, 1.5], [0, 0]])
    std = np.array([[2, 1], [0.5, 1], [1, 1]])
    return simulate_kl(basis, ClusterSpec(centers, std), n_obs, seed=seed)

import numpy as np
import pytest

from bellsweep import models, tebd


@pytest.fixture(scope="session")
def cluster_point_mps():
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.0, h=0.0, u=2)
    return tebd.ground_state_umps(spec, chi=4, tol=1e-9)


@pytest.fixture(scope="session")
def cluster_mid_mps():
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.0, h=0.8, u=2)
    return tebd.ground_state_umps(spec, chi=8, tol=1e-8)


@pytest.fixture(scope="session")
def tfim_mps():
    spec = models.ModelSpec(kind=models.TFIM, h=2.0, u=1)
    return tebd.ground_state_umps(spec, chi=8, tol=1e-8)


@pytest.fixture(scope="session")
def product_up_mps():
    """Exact |up...up> product state as a two-tensor uniform MPS."""
    g = np.zeros((1, 2, 1))
    g[0, 0, 0] = 1.0
    lam = np.ones(1)
    return tebd.UniformMPS(
        gammas=[g.copy(), g.copy()], lams=[lam.copy(), lam.copy()],
        chi=1, energy_per_site=0.0,
        model=models.ModelSpec(kind=models.TFIM, h=0.0, u=1),
        blocked=([g.copy(), g.copy()], [lam.copy(), lam.copy()]),
        blocked_canonical=([g.copy(), g.copy()], [lam.copy(), lam.copy()]),
        sites_per_block=1)

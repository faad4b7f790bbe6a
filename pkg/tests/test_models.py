import numpy as np
import pytest

from bellsweep import models
from bellsweep.errors import ConfigurationError, NumericError, ResourceError


def test_cluster_point_ground_energy():
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.0, h=0.0, u=2)
    H = models.build_hamiltonian_dense(spec, 6, periodic=True)
    gs = models.ground_state_ed(H)
    assert gs.energy == pytest.approx(-6.0, abs=1e-10)


def test_cluster_polarized_limit():
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.0, h=40.0, u=2)
    H = models.build_hamiltonian_dense(spec, 6, periodic=True)
    gs = models.ground_state_ed(H)
    # energy approaches -N*h as the field dominates
    assert gs.energy / (-6 * 40.0) == pytest.approx(1.0, rel=2e-3)


def test_tfim_ferromagnetic_product():
    spec = models.ModelSpec(kind=models.TFIM, h=0.0, u=1)
    H = models.build_hamiltonian_dense(spec, 6, periodic=True)
    gs = models.ground_state_ed(H)
    assert gs.energy == pytest.approx(-6.0, abs=1e-10)


def test_hermiticity_all_kinds():
    rng = np.random.default_rng(0)
    specs = [
        models.ModelSpec(kind=models.CLUSTER_ISING, J=rng.uniform(0, 1),
                         h=rng.uniform(0, 2), u=2),
        models.ModelSpec(kind=models.TFIM, h=rng.uniform(0, 2), u=1),
        models.ModelSpec(kind=models.XXZ, delta=rng.uniform(-1, 1),
                         h=rng.uniform(0, 1), u=1),
    ]
    for spec in specs:
        H = models.build_hamiltonian_dense(spec, 6, periodic=True)
        assert np.max(np.abs(H - H.conj().T)) < 1e-12


def test_translation_invariance_of_ed_state():
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.2, h=0.7, u=2)
    gs = models.ground_state_ed(models.build_hamiltonian_dense(spec, 8))
    vals = [models.state_expectation(gs, [models.PAULI_Z], [i]).real
            for i in range(8)]
    assert max(vals) - min(vals) < 1e-9


def test_ground_state_ed_simple_diag():
    gs = models.ground_state_ed(np.diag([-1.0, 1.0]))
    assert gs.energy == pytest.approx(-1.0)
    assert abs(gs.state[0]) == pytest.approx(1.0)


def test_ground_state_ed_rejects_non_hermitian():
    with pytest.raises(NumericError):
        models.ground_state_ed(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_dense_guard():
    spec = models.ModelSpec(kind=models.TFIM, h=1.0, u=1)
    with pytest.raises(ResourceError):
        models.build_hamiltonian_dense(spec, 15)


def test_cluster_requires_ring():
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.0, h=0.0, u=2)
    with pytest.raises(ConfigurationError):
        models.build_hamiltonian_dense(spec, 6, periodic=False)


def test_model_spec_validation():
    with pytest.raises(ConfigurationError):
        models.ModelSpec(kind="BOGUS")
    with pytest.raises(ConfigurationError):
        models.ModelSpec(kind=models.TFIM, J=-0.1)
    with pytest.raises(ConfigurationError):
        models.ModelSpec(kind=models.CLUSTER_ISING, u=1)


def test_parity_bias_selects_symmetric_state():
    # deep in the TFIM ordered phase the ground doublet splits only through
    # the bias; the symmetric state has <X> = 0 but long-range XX order
    spec = models.ModelSpec(kind=models.TFIM, h=0.2, u=1)
    gs = models.ground_state_ed(models.build_hamiltonian_dense(spec, 8))
    mx = models.state_expectation(gs, [models.PAULI_X], [0]).real
    xx = models.state_expectation(gs, [models.PAULI_X, models.PAULI_X], [0, 4]).real
    assert abs(mx) < 1e-6
    assert xx > 0.9


def test_ed_regression_value():
    # frozen at the first verified run of the dense eigensolver
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.0, h=1.0, u=2)
    gs = models.ground_state_ed(models.build_hamiltonian_dense(spec, 10))
    assert gs.energy == pytest.approx(-12.944271909999179, abs=1e-8)


def test_sparse_matches_dense():
    spec = models.ModelSpec(kind=models.XXZ, delta=0.5, h=0.3, u=1)
    Hd = models.build_hamiltonian_dense(spec, 8)
    Hs = models.build_hamiltonian_sparse(spec, 8)
    assert np.max(np.abs(Hs.toarray() - Hd)) == 0.0
    gs_d = models.ground_state_ed(Hd)
    gs_s = models.ground_state_sparse(spec, 8)
    assert gs_s.energy == pytest.approx(gs_d.energy, abs=1e-9)


def test_field_decomposition_consistency():
    spec = models.ModelSpec(kind=models.CLUSTER_ISING, J=0.3, h=0.77, u=2)
    H0, Hz = models.field_decomposition(spec, 8)
    H = models.build_hamiltonian_sparse(spec, 8)
    assert np.max(np.abs((H0 - 0.77 * Hz - H).toarray())) < 1e-12

"""Spin-chain Hamiltonians and finite-ring ground states.

Shipped models (all terms enter with -1, fields dimensionless):

  CLUSTER_ISING:  H = -sum_i (X_{i-1} Z_i X_{i+1} + J X_i X_{i+1} + h Z_i)
  TFIM:           H = -sum_i (X_i X_{i+1} + h Z_i)
  XXZ:            H = -sum_i (X_i X_{i+1} + Y_i Y_{i+1} + delta Z_i Z_{i+1} + h Z_i)

Exact diagonalization runs on periodic rings only, which preserves the
translation invariance the transfer-operator machinery assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericError, ResourceError

CLUSTER_ISING = "CLUSTER_ISING"
TFIM = "TFIM"
XXZ = "XXZ"

_KINDS = (CLUSTER_ISING, TFIM, XXZ)

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
ID2 = np.eye(2)

# Dense matrices above 2^14 stop being desk-scale.
MAX_DENSE_SITES = 14

# Severity of the positive-parity bias used to resolve ground degeneracies.
PARITY_BIAS = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    J: float = 0.0
    h: float = 0.0
    delta: float = 0.0
    u: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if self.J < 0.0:
            raise ConfigurationError("coupling J must be >= 0")
        if self.u not in (1, 2):
            raise ConfigurationError("unit cell size u must be 1 or 2")
        if self.kind == CLUSTER_ISING and self.u != 2:
            raise ConfigurationError("CLUSTER_ISING uses a two-site unit cell")

    def with_field(self, h):
        return replace(self, h=float(h))

    def key_fields(self):
        return {"kind": self.kind, "J": self.J, "h": self.h,
                "delta": self.delta, "u": self.u}


@dataclass(frozen=True)
class FiniteGroundState:
    n_sites: int
    state: np.ndarray
    energy: float


def _site_ops(n_sites, ops):
    """Sparse operator with 2x2 `ops[site]` at the given sites, identity elsewhere."""
    dtype = np.complex128 if any(np.iscomplexobj(o) for o in ops.values()) else np.float64
    out = sp.identity(1, format="csr", dtype=dtype)
    for i in range(n_sites):
        local = ops.get(i)
        if local is None:
            local = sp.identity(2, format="csr", dtype=dtype)
        else:
            local = sp.csr_matrix(local.astype(dtype))
        out = sp.kron(out, local, format="csr")
    return out


def _term_table(spec, n_sites, periodic):
    """Yield (coefficient, {site: op}) for every Hamiltonian term."""
    rng = range(n_sites) if periodic else range(n_sites - 1)
    if spec.kind == CLUSTER_ISING:
        if not periodic:
            raise ConfigurationError("CLUSTER_ISING three-site terms require a ring")
        for i in range(n_sites):
            yield -1.0, {(i - 1) % n_sites: PAULI_X, i: PAULI_Z, (i + 1) % n_sites: PAULI_X}
            if spec.J != 0.0:
                yield -spec.J, {i: PAULI_X, (i + 1) % n_sites: PAULI_X}
            if spec.h != 0.0:
                yield -spec.h, {i: PAULI_Z}
    elif spec.kind == TFIM:
        for i in rng:
            yield -1.0, {i: PAULI_X, (i + 1) % n_sites: PAULI_X}
        for i in range(n_sites):
            if spec.h != 0.0:
                yield -spec.h, {i: PAULI_Z}
    elif spec.kind == XXZ:
        iy = np.array([[0.0, 1.0], [-1.0, 0.0]])  # i*sigma_y, real
        for i in rng:
            yield -1.0, {i: PAULI_X, (i + 1) % n_sites: PAULI_X}
            # -Y Y = +(iY)(iY), keeps the matrix real
            yield 1.0, {i: iy, (i + 1) % n_sites: iy}
            if spec.delta != 0.0:
                yield -spec.delta, {i: PAULI_Z, (i + 1) % n_sites: PAULI_Z}
        for i in range(n_sites):
            if spec.h != 0.0:
                yield -spec.h, {i: PAULI_Z}


def build_hamiltonian_sparse(spec, n_sites, periodic=True):
    """Sparse CSR Hamiltonian on a chain of n_sites."""
    if n_sites < 3:
        raise ConfigurationError("need at least 3 sites")
    dim = 2 ** n_sites
    H = sp.csr_matrix((dim, dim), dtype=np.float64)
    for coeff, ops in _term_table(spec, n_sites, periodic):
        term = _site_ops(n_sites, ops)
        if np.iscomplexobj(term):
            term = sp.csr_matrix(term.real)
        H = H + coeff * term
    return H


def build_hamiltonian_dense(spec, n_sites, periodic=True):
    """Dense Hermitian Hamiltonian; guarded to n_sites <= 14."""
    if n_sites > MAX_DENSE_SITES:
        raise ResourceError(
            f"dense Hamiltonian at N={n_sites} exceeds the N<={MAX_DENSE_SITES} guard"
        )
    return build_hamiltonian_sparse(spec, n_sites, periodic).toarray()


def field_decomposition(spec, n_sites, periodic=True):
    """(H_rest, H_field) with H(h) = H_rest - h * H_field.

    H_field is the transverse magnetization sum; caching the pair makes
    field sweeps of the finite-ring oracle cheap.
    """
    base = replace(spec, h=0.0)
    H0 = build_hamiltonian_sparse(base, n_sites, periodic)
    Hz = _site_ops(n_sites, {0: PAULI_Z})
    for i in range(1, n_sites):
        Hz = Hz + _site_ops(n_sites, {i: PAULI_Z})
    return H0, sp.csr_matrix(Hz.real)


def ground_energy_curve(spec, n_sites, h_values, periodic=True):
    """Ground energy per site on a field grid, via Lanczos on sparse rings."""
    H0, Hz = field_decomposition(spec, n_sites, periodic)
    bias = sp.diags(-PARITY_BIAS * 0.5 * (1.0 + parity_diagonal(n_sites)))
    v0 = np.ones(H0.shape[0]) / np.sqrt(H0.shape[0])
    energies = []
    for h in h_values:
        H = H0 - float(h) * Hz + bias
        vals, vecs = spla.eigsh(H, k=1, which="SA", v0=v0, maxiter=5000)
        v0 = vecs[:, 0]
        energies.append(float(vals[0]) / n_sites)
    return np.array(energies)


def parity_diagonal(n_sites):
    """Diagonal of the global spin-flip parity prod_i Z_i: (-1)^popcount."""
    idx = np.arange(2 ** n_sites, dtype=np.uint64)
    pop = np.zeros_like(idx, dtype=np.int64)
    for b in range(n_sites):
        pop += ((idx >> np.uint64(b)) & np.uint64(1)).astype(np.int64)
    return np.where(pop % 2 == 0, 1.0, -1.0)


def ground_state_ed(H):
    """Lowest eigenpair of a dense Hermitian matrix.

    Degenerate ground spaces are resolved deterministically by biasing the
    positive-parity sector with a tiny projector shift; the returned energy
    is re-measured against the unbiased Hamiltonian.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NumericError("Hamiltonian must be square")
    if np.max(np.abs(H - H.conj().T)) > 1e-10:
        raise NumericError("Hamiltonian is not Hermitian")
    dim = H.shape[0]
    n_sites = int(round(np.log2(dim)))
    bias = np.zeros(dim)
    if 2 ** n_sites == dim:
        bias = -PARITY_BIAS * 0.5 * (1.0 + parity_diagonal(n_sites))
    vals, vecs = np.linalg.eigh(H + np.diag(bias))
    psi = vecs[:, 0].astype(np.complex128)
    psi /= np.linalg.norm(psi)
    energy = float(np.real(np.vdot(psi, H @ psi)))
    return FiniteGroundState(n_sites=n_sites, state=psi, energy=energy)


def ground_state_sparse(spec, n_sites, periodic=True):
    """Ground state via Lanczos on the sparse Hamiltonian (deterministic start)."""
    H = build_hamiltonian_sparse(spec, n_sites, periodic)
    dim = H.shape[0]
    bias = -PARITY_BIAS * 0.5 * (1.0 + parity_diagonal(n_sites))
    Hb = H + sp.diags(bias)
    v0 = np.ones(dim) / np.sqrt(dim)
    vals, vecs = spla.eigsh(Hb, k=1, which="SA", v0=v0, maxiter=5000)
    psi = vecs[:, 0].astype(np.complex128)
    psi /= np.linalg.norm(psi)
    energy = float(np.real(np.vdot(psi, H @ psi)))
    return FiniteGroundState(n_sites=n_sites, state=psi, energy=energy)


def state_expectation(state, ops, sites):
    """<psi| prod ops[j] at sites[j] |psi> for single-site 2x2 operators."""
    vec = state.state
    n = state.n_sites
    work = vec.reshape([2] * n)
    for op, site in zip(ops, sites):
        work = np.moveaxis(np.tensordot(op, work, axes=([1], [site])), 0, site)
    return complex(np.vdot(vec, work.reshape(-1)))

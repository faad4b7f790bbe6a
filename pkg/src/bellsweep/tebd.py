"""Translationally invariant ground states via imaginary-time iTEBD.

The engine works on a two-tensor unit cell in Vidal form (Gamma, lambda).
The three-site cluster term is made nearest-neighbor by blocking two
physical spins into one four-dimensional site; after convergence the cell
is re-canonicalized exactly (dominant transfer fixed points, gauge fix,
SVD) and split back into physical spin-1/2 tensors.

All tensors stay real float64: every shipped Hamiltonian is real in the
computational basis, and downstream spectral symmetries rely on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import models
from .errors import ConfigurationError, ConvergenceError, NumericError

DEFAULT_SCHEDULE = (0.1, 0.01, 0.001)
SCHEDULE_VERSION = 1

_SV_FLOOR = 1e-12  # relative singular-value cutoff


@dataclass
class UniformMPS:
    """Uniform MPS over a physical cell of spin-1/2 tensors, Vidal form.

    gammas[k] has shape (D_{k-1}, 2, D_k); lams[k] lives on the bond to the
    right of tensor k (bond n-1 wraps around to tensor 0).
    """

    gammas: list
    lams: list
    chi: int
    energy_per_site: float
    model: models.ModelSpec | None = None
    blocked: tuple | None = None  # raw engine cell (gammas, lams), for warm restarts
    blocked_canonical: tuple | None = None  # canonical engine cell, for transfer channels
    sites_per_block: int = 1

    @property
    def n_cell(self):
        return len(self.gammas)

    @property
    def schmidt_weights(self):
        return [np.sort(l)[::-1] for l in self.lams]

    def left_tensors(self):
        """Left-canonical site tensors A_k = diag(lam_{k-1}) Gamma_k."""
        n = self.n_cell
        return [np.tensordot(np.diag(self.lams[(k - 1) % n]), self.gammas[k], axes=(1, 0))
                for k in range(n)]

    def right_tensors(self):
        """Right-canonical site tensors B_k = Gamma_k diag(lam_k)."""
        return [np.tensordot(g, np.diag(l), axes=(2, 0))
                for g, l in zip(self.gammas, self.lams)]

    def blocked_left_tensors(self):
        """Left-canonical tensors of the canonical engine cell.

        These carry 2^sites_per_block-dimensional physical legs and equal
        bond dimensions, which makes the transfer channels much cheaper
        than the split spin-1/2 form.
        """
        if self.blocked_canonical is None:
            return self.left_tensors()
        gs, ls = self.blocked_canonical
        n = len(gs)
        return [np.tensordot(np.diag(ls[(k - 1) % n]), gs[k], axes=(1, 0))
                for k in range(n)]


def canonical_defect(mps):
    """Worst deviation of the left/right canonical fixed-point equations."""
    worst = 0.0
    for A in mps.left_tensors():
        g = np.tensordot(A.conj(), A, axes=([0, 1], [0, 1]))
        worst = max(worst, float(np.max(np.abs(g - np.eye(g.shape[0])))))
    for B in mps.right_tensors():
        g = np.tensordot(B, B.conj(), axes=([1, 2], [1, 2]))
        worst = max(worst, float(np.max(np.abs(g - np.eye(g.shape[0])))))
    return worst


# ---------------------------------------------------------------------------
# blocked Hamiltonian pieces
# ---------------------------------------------------------------------------

def _kron(*mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def blocked_terms(spec):
    """(d_eff, h_loc, h_bond, sites_per_block) for the iTEBD engine."""
    X, Z = models.PAULI_X, models.PAULI_Z
    IY = np.array([[0.0, 1.0], [-1.0, 0.0]])  # i*sigma_y
    I = np.eye(2)
    if spec.kind == models.CLUSTER_ISING:
        # block = two physical spins; all terms become nearest-neighbor
        h_loc = -spec.J * _kron(X, X) - spec.h * (_kron(Z, I) + _kron(I, Z))
        h_bond = (
            -_kron(X, Z, X, I)          # X Z . X centered on site 2 of the block
            - _kron(I, X, Z, X)         # X . Z X centered on site 1 of the next
            - spec.J * _kron(I, X, X, I)
        )
        return 4, h_loc, h_bond, 2
    if spec.kind == models.TFIM:
        return 2, -spec.h * Z, -_kron(X, X), 1
    if spec.kind == models.XXZ:
        h_bond = -_kron(X, X) + _kron(IY, IY) - spec.delta * _kron(Z, Z)
        return 2, -spec.h * Z, h_bond, 1
    raise ConfigurationError(f"unknown model kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# core iTEBD sweeps on a two-tensor cell
# ---------------------------------------------------------------------------

def _bond_theta(gammas, lams, b):
    """Two-site wavefunction lam_{b-1} G_b lam_b G_{b+1} lam_{b+1} at bond b."""
    n = 2
    left, right = b, (b + 1) % n
    th = np.tensordot(np.diag(lams[right]), gammas[left], axes=(1, 0))
    th = np.tensordot(th, np.diag(lams[left]), axes=(2, 0))
    th = np.tensordot(th, gammas[right], axes=(2, 0))
    th = np.tensordot(th, np.diag(lams[right]), axes=(3, 0))
    return th  # (Dl, d, d, Dr)


def _apply_gate(gammas, lams, b, gate, chi):
    """Apply a two-site gate at bond b and re-split with truncation."""
    n = 2
    left, right = b, (b + 1) % n
    d = gammas[left].shape[1]
    th = _bond_theta(gammas, lams, b)
    Dl, Dr = th.shape[0], th.shape[3]
    th = np.tensordot(gate.reshape(d, d, d, d), th, axes=([2, 3], [1, 2]))
    th = np.transpose(th, (2, 0, 1, 3)).reshape(Dl * d, d * Dr)
    try:
        U, s, Vh = np.linalg.svd(th, full_matrices=False)
    except np.linalg.LinAlgError:
        U, s, Vh = sla.svd(th, full_matrices=False, lapack_driver="gesvd")
    keep = min(chi, int(np.sum(s > s[0] * _SV_FLOOR)), len(s))
    keep = max(keep, 1)
    s = s[:keep]
    norm = np.linalg.norm(s)
    lams[left] = s / norm
    inv_l = np.diag(1.0 / np.maximum(lams[right], 1e-14))
    U = U[:, :keep].reshape(Dl, d, keep)
    Vh = Vh[:keep, :].reshape(keep, d, Dr)
    gammas[left] = np.tensordot(inv_l, U, axes=(1, 0))
    gammas[right] = np.tensordot(Vh, inv_l, axes=(2, 0))


def _bond_energy(gammas, lams, b, h_full):
    th = _bond_theta(gammas, lams, b)
    d = th.shape[1]
    v = th.reshape(th.shape[0], d * d, th.shape[3])
    hv = np.tensordot(h_full, v, axes=(1, 1))  # (dd, Dl, Dr)
    num = np.einsum("lpr,plr->", v.conj(), hv)
    den = np.einsum("lpr,lpr->", v.conj(), v)
    return float((num / den).real)


def _cell_energy(gammas, lams, h_loc, h_bond, d):
    I = np.eye(d)
    h_full = h_bond + 0.5 * (np.kron(h_loc, I) + np.kron(I, h_loc))
    return 0.5 * (_bond_energy(gammas, lams, 0, h_full)
                  + _bond_energy(gammas, lams, 1, h_full))


TRIM_REL = 1e-10  # drop bond directions below this relative Schmidt weight


def _trim_cell(gammas, lams):
    """Remove near-dead bond directions; their probability is < TRIM_REL^2."""
    n = len(gammas)
    for b in range(n):
        keep = lams[b] > lams[b].max() * TRIM_REL
        if np.all(keep):
            continue
        lams[b] = lams[b][keep]
        lams[b] /= np.linalg.norm(lams[b])
        gammas[b] = gammas[b][:, :, keep]
        gammas[(b + 1) % n] = gammas[(b + 1) % n][keep, :, :]
    return gammas, lams


def _default_init_vector(d):
    """Deterministic generic product start.

    The tilt breaks every discrete symmetry slightly, so imaginary time
    converges to an injective representation (one extremal state in
    degenerate ordered phases).  Symmetry-sector starts are avoided on
    purpose: they relax into redundant superposition representations whose
    transfer channels carry multiple unit-modulus modes, which poisons the
    Bell spectra downstream.
    """
    v = np.array([1.0] + [0.35 / (i + 1) for i in range(d - 1)])
    return v / np.linalg.norm(v)


def _run_itebd(h_loc, h_bond, d, chi, tol, max_sweeps, schedule, init,
               check_every=10):
    if init is None:
        v = _default_init_vector(d)
        gammas = [v.reshape(1, d, 1).copy() for _ in range(2)]
        lams = [np.ones(1), np.ones(1)]
    else:
        gammas = [g.copy() for g in init[0]]
        lams = [l.copy() for l in init[1]]
    I = np.eye(d)
    h_full = h_bond + 0.5 * (np.kron(h_loc, I) + np.kron(I, h_loc))
    energy = _cell_energy(gammas, lams, h_loc, h_bond, d)
    last_delta = None
    for dtau in schedule:
        gate = sla.expm(-dtau * h_full)
        e_prev = energy
        converged = False
        for sweep in range(1, max_sweeps + 1):
            _apply_gate(gammas, lams, 0, gate, chi)
            _apply_gate(gammas, lams, 1, gate, chi)
            if sweep % check_every == 0:
                energy = _cell_energy(gammas, lams, h_loc, h_bond, d)
                last_delta = abs(energy - e_prev)
                if last_delta < tol * max(1.0, abs(energy)):
                    converged = True
                    break
                e_prev = energy
        if not converged and dtau == schedule[-1]:
            delta_txt = "unknown" if last_delta is None else f"{last_delta:.3e}"
            raise ConvergenceError(
                f"iTEBD stalled at dtau={dtau}: energy delta {delta_txt} "
                f"after {max_sweeps} sweeps", last_delta=last_delta)
    gammas, lams = _trim_cell(gammas, lams)
    energy = _cell_energy(gammas, lams, h_loc, h_bond, d)
    return gammas, lams, energy


# ---------------------------------------------------------------------------
# exact re-canonicalization of the converged cell
# ---------------------------------------------------------------------------

def _dominant_fixed_point(tensors, side, tol=1e-13, max_iter=20000):
    """Dominant fixed point of the cell transfer channel, Hermitian PSD.

    tensors are (Dl, d, Dr); 'right' iterates X -> sum A X A^dag site by site
    from the right, 'left' the transpose channel.  The averaged power
    iteration X <- (T(X) + X)/2 starts from the identity, so symmetry
    sectors with eigenvalue -lambda_max cannot trap it.
    """
    chi0 = tensors[0].shape[0]

    def channel(X):
        if side == "right":
            for A in reversed(tensors):
                X = np.einsum("asb,bc,dsc->ad", A, X, A.conj(), optimize=True)
        else:
            for A in tensors:
                X = np.einsum("asb,ac,csd->bd", A.conj(), X, A, optimize=True)
        return X

    X = np.eye(chi0)
    eta = 1.0
    for _ in range(max_iter):
        TX = channel(X)
        eta = float(np.einsum("ab,ab->", X.conj(), TX).real)  # Rayleigh quotient
        Xn = 0.5 * (TX / max(abs(eta), 1e-300) + X)
        Xn = 0.5 * (Xn + Xn.conj().T)
        Xn /= np.linalg.norm(Xn)
        delta = np.linalg.norm(Xn - X)
        X = Xn
        if delta < tol:
            break
    TX = channel(X)
    eta = float(np.einsum("ab,ab->", X.conj(), TX).real)
    if np.iscomplexobj(X) and np.max(np.abs(X.imag)) < 1e-10 * np.max(np.abs(X.real)):
        X = X.real
    return X, abs(eta)


def _sqrt_factor(V):
    """V = F F^dag with rank trimming; returns F and its pseudo-inverse."""
    w, P = np.linalg.eigh(0.5 * (V + V.conj().T))
    w = np.maximum(w, 0.0)
    keep = w > max(w.max(), 0.0) * 1e-14
    if not np.any(keep):
        raise NumericError("transfer fixed point is numerically zero")
    w, P = w[keep], P[:, keep]
    F = P * np.sqrt(w)
    Finv = (P / np.sqrt(w)).conj().T
    return F, Finv


def canonicalize_cell(gammas, lams, chi):
    """Restore exact Vidal canonical form on a two-tensor cell.

    Gauge-fixes the wrap-around bond from the dominant left/right transfer
    fixed points, then re-splits the interior bond by SVD.  Returns new
    (gammas, lams) with the transfer channel normalized to spectral radius 1.
    """
    d = gammas[0].shape[1]
    # fold the cell into one effective site with the wrap bond outside
    big = np.tensordot(gammas[0], np.diag(lams[0]), axes=(2, 0))
    big = np.tensordot(big, gammas[1], axes=(2, 0))  # (Dl, d, d, Dr)
    big = big.reshape(big.shape[0], d * d, big.shape[3])
    lam_b = lams[1]

    A_right = [np.tensordot(big, np.diag(lam_b), axes=(2, 0))]
    V_R, eta = _dominant_fixed_point(A_right, "right")
    A_left = [np.tensordot(np.diag(lam_b), big, axes=(1, 0))]
    V_L, _ = _dominant_fixed_point(A_left, "left")

    X, Xinv = _sqrt_factor(V_R)
    Yd, Ydinv = _sqrt_factor(V_L)        # V_L = Yd Yd^dag, Y = Yd^dag
    M = Yd.conj().T @ np.diag(lam_b) @ X
    U, s, Vh = np.linalg.svd(M)
    keep = min(chi, int(np.sum(s > s[0] * TRIM_REL)))
    keep = max(keep, 1)
    U, s, Vh = U[:, :keep], s[:keep], Vh[:keep, :]
    s_norm = np.linalg.norm(s)
    lam_new = s / s_norm

    left_g = Vh @ Xinv                    # acts on the left bond of the cell
    right_g = Ydinv.conj().T @ U          # acts on the right bond
    big = np.tensordot(left_g, big, axes=(1, 0))
    big = np.tensordot(big, right_g, axes=(2, 0))
    big *= s_norm / np.sqrt(eta)
    if np.max(np.abs(big.imag)) < 1e-10 * max(np.max(np.abs(big.real)), 1e-300):
        big = big.real

    # re-split the interior bond from the canonical two-site wavefunction
    theta = np.tensordot(np.diag(lam_new), big, axes=(1, 0))
    theta = np.tensordot(theta, np.diag(lam_new), axes=(2, 0))
    Dl = theta.shape[0]
    theta = theta.reshape(Dl * d, d * theta.shape[2])
    U2, s2, Vh2 = np.linalg.svd(theta, full_matrices=False)
    keep2 = min(chi, int(np.sum(s2 > s2[0] * TRIM_REL)))
    keep2 = max(keep2, 1)
    U2, s2, Vh2 = U2[:, :keep2], s2[:keep2], Vh2[:keep2, :]
    lam_mid = s2 / np.linalg.norm(s2)
    inv_b = np.diag(1.0 / np.maximum(lam_new, 1e-14))
    g0 = np.tensordot(inv_b, U2.reshape(Dl, d, keep2), axes=(1, 0))
    g1 = np.tensordot(Vh2.reshape(keep2, d, Dl), inv_b, axes=(2, 0))
    return [g0, g1], [lam_mid, lam_new]


def split_physical(gammas, lams, sites_per_block, chi):
    """Split blocked Vidal tensors (d = 2^m) into physical spin-1/2 tensors."""
    if sites_per_block == 1:
        return [g.copy() for g in gammas], [l.copy() for l in lams]
    out_g, out_l = [], []
    n = len(gammas)
    for k in range(n):
        d_blk = gammas[k].shape[1]
        lam_l, lam_r = lams[(k - 1) % n], lams[k]
        th = np.tensordot(np.diag(lam_l), gammas[k], axes=(1, 0))
        th = np.tensordot(th, np.diag(lam_r), axes=(2, 0))
        Dl, Dr = th.shape[0], th.shape[2]
        th = th.reshape(Dl * 2, (d_blk // 2) * Dr)
        U, s, Vh = np.linalg.svd(th, full_matrices=False)
        keep = max(1, min(chi * 2, int(np.sum(s > s[0] * TRIM_REL))))
        U, s, Vh = U[:, :keep], s[:keep], Vh[:keep, :]
        lam_mid = s / np.linalg.norm(s)
        g_first = np.tensordot(np.diag(1.0 / np.maximum(lam_l, 1e-14)),
                               U.reshape(Dl, 2, keep), axes=(1, 0))
        g_second = np.tensordot(Vh.reshape(keep, 2, Dr),
                                np.diag(1.0 / np.maximum(lam_r, 1e-14)), axes=(2, 0))
        out_g.extend([g_first, g_second])
        out_l.extend([lam_mid, lam_r.copy()])
    return out_g, out_l


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def ground_state_umps(spec, chi, tol=1e-8, max_sweeps=4000,
                      schedule=DEFAULT_SCHEDULE, warm_from=None):
    """Variational ground state of `spec` as a canonical UniformMPS.

    chi caps the bond dimension (2..64ish at desk scale); tol is the
    per-stage energy stationarity threshold.  warm_from reuses the blocked
    engine state of a previous result (e.g. the neighboring sweep point).
    """
    if not 2 <= chi <= 64:
        raise ConfigurationError("chi must lie in [2, 64]")
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    d, h_loc, h_bond, spb = blocked_terms(spec)
    init = None
    if warm_from is not None and warm_from.blocked is not None:
        bg, bl = warm_from.blocked
        if bg[0].shape[1] == d:
            init = (bg, bl)
    gammas, lams, _ = _run_itebd(h_loc, h_bond, d, chi, tol, max_sweeps,
                                 schedule, init)
    blocked_raw = ([g.copy() for g in gammas], [l.copy() for l in lams])
    gammas, lams = canonicalize_cell(gammas, lams, chi)
    energy_block = _cell_energy(gammas, lams, h_loc, h_bond, d)
    phys_g, phys_l = split_physical(gammas, lams, spb, chi)
    mps = UniformMPS(
        gammas=phys_g, lams=phys_l,
        chi=max(l.size for l in phys_l),
        energy_per_site=energy_block / spb,
        model=spec,
        blocked=blocked_raw,
        blocked_canonical=([g.copy() for g in gammas], [l.copy() for l in lams]),
        sites_per_block=spb,
    )
    return mps


def mps_local_expectation(mps, op_string, offset=0):
    """Expectation of a product of single-site operators starting at offset."""
    if len(op_string) > 4:
        raise ConfigurationError("operator strings longer than 4 are not supported")
    n = mps.n_cell
    Bs = mps.right_tensors()
    lam_left = mps.lams[(offset - 1) % n]
    L = np.diag(lam_left.astype(np.complex128) ** 2)
    for j, op in enumerate(op_string):
        B = Bs[(offset + j) % n].astype(np.complex128)
        # L'_{cd} = L_{ab} B[a,s,c] conj(B[b,s',d]) O[s',s]
        T = np.tensordot(L, B, axes=(0, 0))              # (b, s, c)
        T = np.tensordot(T, np.asarray(op, dtype=np.complex128), axes=(1, 1))  # (b, c, s')
        L = np.tensordot(T, B.conj(), axes=([0, 2], [0, 1]))  # (c, d)
    val = complex(np.trace(L))
    if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
        raise NumericError(f"expectation value has imaginary part {val.imag}")
    return val.real


def energy_per_site_check(mps):
    """Energy per physical site measured on the canonical MPS (validation)."""
    spec = mps.model
    X, Z = models.PAULI_X, models.PAULI_Z
    IY = np.array([[0.0, 1.0], [-1.0, 0.0]])
    n = mps.n_cell
    total = 0.0
    for i in range(n):
        if spec.kind == models.CLUSTER_ISING:
            total -= mps_local_expectation(mps, [X, Z, X], i)
            total -= spec.J * mps_local_expectation(mps, [X, X], i)
            total -= spec.h * mps_local_expectation(mps, [Z], i)
        elif spec.kind == models.TFIM:
            total -= mps_local_expectation(mps, [X, X], i)
            total -= spec.h * mps_local_expectation(mps, [Z], i)
        elif spec.kind == models.XXZ:
            total -= mps_local_expectation(mps, [X, X], i)
            total += mps_local_expectation(mps, [IY, IY], i)
            total -= spec.delta * mps_local_expectation(mps, [Z, Z], i)
            total -= spec.h * mps_local_expectation(mps, [Z], i)
    return total / n

"""Dense statevector simulation of qubit chains.

Qubit ordering is little-endian throughout: qubit ``q`` is bit ``q`` of the
basis index. Two-qubit gates are given as 4x4 matrices in the basis
``|b_a b_b>`` with ``a`` the first (more significant) factor, so
``np.kron(x, y)`` acts with ``x`` on the first site and ``y`` on the second.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 24
MAX_RDM_LENGTH = 12
UNITARY_TOL = 1e-8


class QsimError(ValueError):
    pass


@dataclass
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise QsimError(
                f"amplitude vector of length {self.amplitudes.shape} does not match {self.n_qubits} qubits"
            )

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "Statevector":
        amps = np.asarray(amplitudes, dtype=np.complex128).ravel().copy()
        n = int(round(np.log2(amps.size)))
        if 2**n != amps.size:
            raise QsimError(f"length {amps.size} is not a power of two")
        _check_size(n, 1)
        return cls(n, amps)


@dataclass
class DensityMatrix:
    n_qubits: int
    entries: np.ndarray

    def trace(self) -> complex:
        return complex(np.trace(self.entries))


def _check_size(n: int, lo: int) -> None:
    if not (lo <= n <= MAX_QUBITS):
        raise QsimError(f"n_qubits must lie in [{lo}, {MAX_QUBITS}], got {n}")


def new_product_plus(n_qubits: int) -> Statevector:
    _check_size(n_qubits, 1)
    dim = 2**n_qubits
    return Statevector(n_qubits, np.full(dim, 2.0 ** (-n_qubits / 2), dtype=np.complex128))


def new_all_ones(n_qubits: int) -> Statevector:
    _check_size(n_qubits, 1)
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[-1] = 1.0
    return Statevector(n_qubits, amps)


def new_ghz(n_qubits: int) -> Statevector:
    _check_size(n_qubits, 2)
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = amps[-1] = 1 / np.sqrt(2)
    return Statevector(n_qubits, amps)


def check_unitary(u: np.ndarray, dim: int, tol: float = UNITARY_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != (dim, dim):
        raise QsimError(f"expected a {dim}x{dim} matrix, got shape {u.shape}")
    if np.linalg.norm(u.conj().T @ u - np.eye(dim)) > tol:
        raise QsimError("gate is not unitary")
    return u


def _check_site(state: Statevector, site: int) -> None:
    if not (0 <= site < state.n_qubits):
        raise QsimError(f"site {site} out of range for {state.n_qubits} qubits")


def apply_1q(state: Statevector, site: int, u: np.ndarray) -> None:
    """Apply a single-qubit gate in place."""
    _check_site(state, site)
    u = check_unitary(u, 2)
    n = state.n_qubits
    # amplitude pairs differing in bit `site` sit at stride 2**site
    v = state.amplitudes.reshape(2 ** (n - 1 - site), 2, 2**site)
    v0 = v[:, 0, :].copy()
    v1 = v[:, 1, :]
    v[:, 0, :] = u[0, 0] * v0 + u[0, 1] * v1
    v[:, 1, :] = u[1, 0] * v0 + u[1, 1] * v1


def apply_2q(state: Statevector, site: int, u: np.ndarray) -> None:
    """Apply a two-qubit gate on ``(site, (site + 1) % N)`` in place."""
    _check_site(state, site)
    if state.n_qubits < 2:
        raise QsimError("two-qubit gate needs at least two qubits")
    u = check_unitary(u, 4)
    n = state.n_qubits
    a, b = site, (site + 1) % n
    ax_a, ax_b = n - 1 - a, n - 1 - b
    t = state.amplitudes.reshape((2,) * n)
    out = np.tensordot(u.reshape(2, 2, 2, 2), t, axes=([2, 3], [ax_a, ax_b]))
    out = np.moveaxis(out, [0, 1], [ax_a, ax_b])
    state.amplitudes[:] = out.reshape(-1)


def _window(state: Statevector, first_site: int, length: int) -> np.ndarray:
    n = state.n_qubits
    if length < 1 or first_site < 0 or first_site + length > n:
        raise QsimError(f"window [{first_site}, {first_site + length}) exceeds chain of {n}")
    # middle axis indexes the window bits, little-endian from first_site
    return state.amplitudes.reshape(2 ** (n - first_site - length), 2**length, 2**first_site)


def reduced_density_matrix(state: Statevector, first_site: int, length: int) -> DensityMatrix:
    if length > MAX_RDM_LENGTH:
        raise QsimError(f"window length {length} exceeds cap {MAX_RDM_LENGTH}")
    m = _window(state, first_site, length)
    rho = np.einsum("awb,avb->wv", m, m.conj())
    return DensityMatrix(length, rho)


def window_probabilities(state: Statevector, first_site: int, length: int) -> np.ndarray:
    m = _window(state, first_site, length)
    p = np.einsum("awb,awb->w", m, m.conj()).real
    return p / p.sum()


def index_to_bits(index, length: int) -> np.ndarray:
    index = np.asarray(index)
    return ((index[..., None] >> np.arange(length)) & 1).astype(np.uint8)


def sample_z(state: Statevector, first_site: int, length: int, rng: np.random.Generator,
             shots: int | None = None) -> np.ndarray:
    """Sample Z-basis outcomes of a contiguous window.

    Returns bits in site order, shape ``(length,)`` or ``(shots, length)``.
    The state is left untouched.
    """
    p = window_probabilities(state, first_site, length)
    idx = rng.choice(p.size, size=shots, p=p)
    return index_to_bits(idx, length)


def patch_factor(state: Statevector, first_site: int, length: int, rtol: float = 1e-13) -> np.ndarray:
    """Return ``K`` with shape ``(r, 2**length)`` such that ``rho = K.T @ K.conj()``.

    ``rho`` is the reduced density matrix of the window; ``r`` is its rank up
    to ``rtol``. Any operation on the window can act on the rows of ``K``
    instead of the full state.
    """
    m = _window(state, first_site, length)
    env = np.ascontiguousarray(m.transpose(0, 2, 1)).reshape(-1, 2**length)
    if env.shape[0] == 1:
        return env.copy()
    _, s, vh = np.linalg.svd(env, full_matrices=False)
    keep = s > rtol * s[0]
    return s[keep, None] * vh[keep]


def patch_mps(state: Statevector, first_site: int, length: int,
              rtol: float = 1e-13) -> tuple[np.ndarray, list[np.ndarray]]:
    """Exact right-canonical MPS of a window, with the environment folded in.

    Returns ``(heads, tensors)``. ``heads`` has shape ``(r, chi_0)``: row ``e``
    is the unnormalized left boundary vector for environment Schmidt state
    ``e`` (rows are orthogonal, squared norms sum to one). ``tensors[j]`` has
    shape ``(chi_j, 2, chi_{j+1})`` for window site ``first_site + j`` and is
    right-canonical. Bond dimensions are the exact Schmidt ranks up to ``rtol``.
    """
    k = patch_factor(state, first_site, length, rtol)
    r = k.shape[0]
    # axes: env, then window sites in increasing order
    psi = k.reshape((r,) + (2,) * length).transpose((0,) + tuple(range(length, 0, -1)))
    psi = psi.reshape(r * 2 ** length, 1)
    tensors: list[np.ndarray] = []
    for _ in range(length):
        chi = psi.shape[1]
        m = psi.reshape(-1, 2 * chi)
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        keep = s > rtol * s[0]
        tensors.append(vh[keep].reshape(-1, 2, chi))
        psi = u[:, keep] * s[keep]
    tensors.reverse()
    return psi, tensors

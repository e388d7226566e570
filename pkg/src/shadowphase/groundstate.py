"""Ground states of the periodic transverse-field Ising and ANNNI chains.

    H = -J ( sum_j Z_j Z_{j+1} - kappa sum_j Z_j Z_{j+2} + g sum_j X_j )

Lanczos runs inside the Z2-even sector of ``P = prod_j X_j``; a dense
Hamiltonian built from Kronecker products serves as the oracle for small N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .qsim import Statevector

MAX_SITES = 20
DENSE_MAX_SITES = 12


class LanczosNotConverged(RuntimeError):
    def __init__(self, msg: str, result: "GroundStateResult"):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class AnnniParams:
    g: float
    kappa: float = 0.0
    N: int = 16
    J: float = 1.0

    def __post_init__(self):
        if not (2 <= self.N <= MAX_SITES):
            raise ValueError(f"N must lie in [2, {MAX_SITES}]")
        if self.g < 0 or self.kappa < 0:
            raise ValueError("g and kappa must be non-negative")

    def norm_bound(self) -> float:
        return self.N * abs(self.J) * (1 + self.kappa + self.g)


@dataclass
class GroundStateResult:
    energy: float
    state: Statevector
    parity: float
    iterations: int
    residual: float
    energies: list[float] = field(default_factory=list)

    @property
    def sector_even(self) -> bool:
        return abs(self.parity - 1) < 1e-8


@lru_cache(maxsize=16)
def _diagonal(n: int, kappa: float, j: float) -> np.ndarray:
    idx = np.arange(2**n)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)  # |0> -> +1
    nn = (z * np.roll(z, -1, axis=1)).sum(axis=1)
    nnn = (z * np.roll(z, -2, axis=1)).sum(axis=1)
    diag = -j * (nn - kappa * nnn).astype(np.float64)
    diag.flags.writeable = False
    return diag


def hamiltonian_matvec(p: AnnniParams, v: np.ndarray) -> np.ndarray:
    """``H @ v`` without building H: diagonal bond terms plus single bit flips."""
    n = p.N
    v = np.asarray(v)
    if v.shape != (2**n,):
        raise ValueError(f"vector length {v.shape} does not match N={n}")
    out = _diagonal(n, float(p.kappa), float(p.J)) * v
    if p.g:
        flips = np.zeros_like(v)
        for j in range(n):
            flips += v.reshape(2 ** (n - 1 - j), 2, 2**j)[:, ::-1, :].reshape(-1)
        out -= p.J * p.g * flips
    return out


def parity_apply(v: np.ndarray) -> np.ndarray:
    """``prod_j X_j`` flips every bit: index x -> 2**N - 1 - x."""
    return v[::-1].copy()


_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


def _kron_sites(sites: dict[int, np.ndarray], n: int) -> np.ndarray:
    out = np.ones((1, 1))
    for q in reversed(range(n)):  # most significant qubit first in kron
        out = np.kron(out, sites.get(q, np.eye(2)))
    return out


def dense_hamiltonian(p: AnnniParams) -> np.ndarray:
    n = p.N
    if n > DENSE_MAX_SITES:
        raise ValueError(f"dense Hamiltonian limited to N <= {DENSE_MAX_SITES}")
    h = np.zeros((2**n, 2**n))
    for j in range(n):
        h -= p.J * _kron_sites({j: _PAULI_Z, (j + 1) % n: _PAULI_Z}, n)
        h += p.J * p.kappa * _kron_sites({j: _PAULI_Z, (j + 2) % n: _PAULI_Z}, n)
        h -= p.J * p.g * _kron_sites({j: _PAULI_X}, n)
    return h


def dense_even_ground_energy(p: AnnniParams) -> tuple[float, float]:
    """``(even-sector minimum, full-spectrum minimum)`` by dense diagonalisation."""
    h = dense_hamiltonian(p)
    n = p.N
    par = _kron_sites({j: _PAULI_X for j in range(n)}, n)
    w, v = np.linalg.eigh(par)
    even = v[:, w > 0]
    return float(np.linalg.eigvalsh(even.T @ h @ even)[0]), float(np.linalg.eigvalsh(h)[0])


def _project_even(v: np.ndarray) -> np.ndarray:
    return 0.5 * (v + v[::-1])


def lanczos_ground(p: AnnniParams, tol: float = 1e-10, max_iter: int = 500,
                   seed: int = 0) -> GroundStateResult:
    """Lowest even-sector eigenpair by Lanczos with full reorthogonalisation.

    Converged when ``||H psi - E psi|| <= tol * max(1, ||H||_est)``.
    """
    hnorm = max(1.0, p.norm_bound())
    rng = np.random.default_rng(seed)
    v = _project_even(rng.standard_normal(2**p.N))
    v /= np.linalg.norm(v)
    basis = [v]
    alphas: list[float] = []
    betas: list[float] = []
    energies: list[float] = []
    residual = math.inf
    theta = math.nan
    y = np.ones(1)
    it = 0
    for it in range(1, max_iter + 1):
        w = hamiltonian_matvec(p, basis[-1])
        a = float(basis[-1] @ w)
        alphas.append(a)
        w -= a * basis[-1]
        if len(basis) > 1:
            w -= betas[-1] * basis[-2]
        w = _project_even(w)
        q = np.array(basis)
        w -= q.T @ (q @ w)
        w -= q.T @ (q @ w)
        b = float(np.linalg.norm(w))
        vals, vecs = eigh_tridiagonal(np.array(alphas), np.array(betas)) if betas else (
            np.array(alphas), np.ones((1, 1)))
        theta, y = float(vals[0]), vecs[:, 0]
        energies.append(theta)
        residual = abs(b * y[-1])
        if residual <= tol * hnorm or b < 1e-14 * hnorm:
            break
        betas.append(b)
        basis.append(w / b)
    psi = np.array(basis[: len(y)]).T @ y
    psi = _project_even(psi)
    psi /= np.linalg.norm(psi)
    hpsi = hamiltonian_matvec(p, psi)
    energy = float(psi @ hpsi)
    true_res = float(np.linalg.norm(hpsi - energy * psi))
    parity = float(psi @ parity_apply(psi))
    result = GroundStateResult(energy, Statevector(p.N, psi.astype(np.complex128)), parity, it,
                               true_res, energies)
    if true_res > max(tol * hnorm, 1e-8 * hnorm):
        raise LanczosNotConverged(
            f"residual {true_res:.3e} after {it} iterations (g={p.g}, kappa={p.kappa})", result)
    return result


def ising_boundary(kappa: float) -> float:
    """Approximate Ising critical field for 0 <= kappa <= 1/2.

    Evaluated in the rationalised form ``2(1-2k) / (1 + sqrt(a))`` with
    ``a = (1-3k+4k^2)/(1-k)``, which equals the usual expression and has the
    exact limit 1 at kappa = 0.
    """
    if not (0 <= kappa <= 0.5):
        raise ValueError("ising_boundary defined for 0 <= kappa <= 0.5")
    a = (1 - 3 * kappa + 4 * kappa**2) / (1 - kappa)
    return 2 * (1 - 2 * kappa) / (1 + math.sqrt(a))


def bkt_boundary(kappa: float) -> float:
    """Approximate BKT critical field for kappa >= 1/2."""
    if kappa < 0.5:
        raise ValueError("bkt_boundary defined for kappa >= 0.5")
    return 1.05 * math.sqrt((kappa - 0.5) * (kappa - 0.1))

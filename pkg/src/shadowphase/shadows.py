"""Classical shadows on a patch and the estimators built from them.

A shadow set is stored as a float32 array of shape ``(n_s, l, 4)`` whose
last axis holds ``(theta, phi, chi, b)``: the Euler angles of the random
single-qubit rotation applied before a Z measurement, and the outcome bit.
Each site contributes the snapshot ``3 U^dag |b><b| U - I``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qsim import DensityMatrix, Statevector, patch_mps
from .randunit import euler_from_unitary, haar_unitary, unitary_from_euler

MAX_TOMOGRAPHY_SITES = 6
MAX_PURITY_SITES = 4

_PAULIS = np.array([
    [[1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=np.complex128)


class EstimatorUndefined(ArithmeticError):
    """A purity estimate came out non-positive, so a log is undefined."""


@dataclass
class ShadowSet:
    data: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[2] != 4 or self.data.shape[0] < 1:
            raise ValueError(f"shadow data must have shape (n_s, l, 4), got {self.data.shape}")

    @property
    def n_s(self) -> int:
        return self.data.shape[0]

    @property
    def patch_length(self) -> int:
        return self.data.shape[1]

    def snapshot(self, i: int) -> np.ndarray:
        return self.data[i]

    def subset(self, n: int) -> "ShadowSet":
        return ShadowSet(self.data[:n], self.label)


@dataclass
class MomConfig:
    K: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")


def _sample_mps(heads: np.ndarray, tensors: list[np.ndarray], gates: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
    """Sequential conditional sampling, one row per shot.

    Each shot picks an environment Schmidt state, then measures the window
    sites left to right after rotating with ``gates[:, j]`` and collapses.
    """
    shots = gates.shape[0]
    _, s, vh = np.linalg.svd(heads, full_matrices=False)
    w = s**2
    env = rng.choice(len(w), size=shots, p=w / w.sum())
    v = vh[env]
    bits = np.empty((shots, len(tensors)), dtype=np.uint8)
    rows = np.arange(shots)
    for j, a in enumerate(tensors):
        x = np.einsum("na,abc->nbc", v, a)
        x = np.einsum("nij,njc->nic", gates[:, j], x)
        p = np.einsum("nbc,nbc->nb", x, x.conj()).real
        b = (rng.random(shots) * (p[:, 0] + p[:, 1]) >= p[:, 0]).astype(np.uint8)
        bits[:, j] = b
        v = x[rows, b] / np.sqrt(p[rows, b])[:, None]
    return bits


def measure_shadows(state: Statevector, patch_start: int, l: int, n_s: int,
                    rng: np.random.Generator, basis: str = "haar") -> ShadowSet:
    """Collect ``n_s`` randomized single-site measurements on a patch.

    ``basis="z"`` pins every rotation to the identity (a test hook).
    """
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    if basis not in ("haar", "z"):
        raise ValueError(f"unknown basis {basis!r}")
    heads, tensors = patch_mps(state, patch_start, l)
    if basis == "haar":
        gates = haar_unitary(2, rng, size=n_s * l).reshape(n_s, l, 2, 2)
        angles, _ = euler_from_unitary(gates)
    else:
        gates = np.broadcast_to(np.eye(2, dtype=np.complex128), (n_s, l, 2, 2))
        angles = np.zeros((n_s, l, 3))
    out = np.empty((n_s, l, 4), dtype=np.float32)
    out[:, :, :3] = angles
    out[:, :, 3] = _sample_mps(heads, tensors, gates, rng)
    return ShadowSet(out)


def _site_snapshots(data: np.ndarray, site: int) -> np.ndarray:
    """``3 U^dag |b><b| U - I`` for every snapshot at one site, ``(n, 2, 2)``."""
    a = data[:, site].astype(np.float64)
    u = unitary_from_euler(a[:, 0], a[:, 1], a[:, 2])
    b = a[:, 3].round().astype(int)
    v = u[np.arange(len(b)), b].conj()
    return 3 * np.einsum("ni,nj->nij", v, v.conj()) - np.eye(2)


def _validate_sites(set_: ShadowSet, sites) -> list[int]:
    sites = sorted(int(s) for s in sites)
    if not sites:
        raise ValueError("empty site set")
    if sites[0] < 0 or sites[-1] >= set_.patch_length or len(set(sites)) != len(sites):
        raise ValueError(f"sites {sites} not a subset of the patch")
    return sites


def _kron_stack(factors: list[np.ndarray]) -> np.ndarray:
    # little-endian: the first site is the least significant factor
    out = factors[0]
    for f in factors[1:]:
        n = out.shape[0]
        out = np.einsum("nab,ncd->ncadb", out, f).reshape(n, f.shape[1] * out.shape[1], -1)
    return out


def snapshot_density(snap: np.ndarray, sites) -> DensityMatrix:
    """Single-snapshot estimate on ``sites``; trace one, not positive in general."""
    snap = np.asarray(snap)
    sites = _validate_sites(ShadowSet(snap[None]), sites)
    factors = [_site_snapshots(snap[None], s) for s in sites]
    return DensityMatrix(len(sites), _kron_stack(factors)[0])


def mean_snapshot(set_: ShadowSet, sites, chunk: int = 2048) -> DensityMatrix:
    sites = _validate_sites(set_, sites)
    if len(sites) > MAX_TOMOGRAPHY_SITES:
        raise ValueError(f"tomography limited to {MAX_TOMOGRAPHY_SITES} sites")
    dim = 2 ** len(sites)
    acc = np.zeros((dim, dim), dtype=np.complex128)
    for lo in range(0, set_.n_s, chunk):
        block = set_.data[lo:lo + chunk]
        acc += _kron_stack([_site_snapshots(block, s) for s in sites]).sum(axis=0)
    return DensityMatrix(len(sites), acc / set_.n_s)


def _pauli_features(set_: ShadowSet, sites: list[int]) -> np.ndarray:
    """Vectors ``T_j`` with ``tr(rho_j rho_k) = T_j . T_k`` for product snapshots."""
    feats = None
    for s in sites:
        snaps = _site_snapshots(set_.data, s)
        c = np.einsum("nab,pba->np", snaps, _PAULIS).real / np.sqrt(2)
        feats = c if feats is None else np.einsum("np,nq->npq", feats, c).reshape(len(c), -1)
    return feats


def mom_blocks(n_s: int, K: int, seed: int) -> np.ndarray:
    """Snapshot indices of each block, ``(K, n_s // K)``; remainder dropped."""
    m = n_s // K
    if m < 2:
        raise ValueError(f"{n_s} snapshots give fewer than 2 per block for K={K}")
    perm = np.random.default_rng(seed).permutation(n_s)
    return perm[: K * m].reshape(K, m)


def mom_pair_count(n_s: int, K: int) -> int:
    """Ordered pairs ``(j, k), j != k`` entering the median-of-means estimate."""
    m = n_s // K
    return K * m * (m - 1)


def purity_block_estimates(set_: ShadowSet, sites, cfg: MomConfig) -> np.ndarray:
    """Pairwise U-statistic ``mean_{j != k} tr(rho_j rho_k)`` for every block.

    Uses ``sum_{j != k} T_j.T_k = |sum_j T_j|^2 - sum_j |T_j|^2`` with exact
    (``math.fsum``) accumulation, so results are independent of snapshot order.
    """
    sites = _validate_sites(set_, sites)
    if len(sites) > MAX_PURITY_SITES:
        raise ValueError(f"purity limited to {MAX_PURITY_SITES} sites")
    feats = _pauli_features(set_, sites)
    blocks = mom_blocks(set_.n_s, cfg.K, cfg.seed)
    m = blocks.shape[1]
    out = np.empty(cfg.K)
    for i, idx in enumerate(blocks):
        f = feats[idx]
        total = np.array([math.fsum(col) for col in f.T])
        diag = math.fsum(np.einsum("np,np->n", f, f).tolist())
        out[i] = (math.fsum((total * total).tolist()) - diag) / (m * (m - 1))
    return out


def purity_mom(set_: ShadowSet, sites, cfg: MomConfig | None = None) -> float:
    """Median-of-means estimate of ``tr(rho^2)`` on ``sites``; may leave [0, 1]."""
    cfg = cfg or MomConfig()
    return float(np.median(purity_block_estimates(set_, sites, cfg)))


def renyi2_mutual_information(set_: ShadowSet, a: int | None = None, b: int | None = None,
                              cfg: MomConfig | None = None) -> float:
    """``S2(A) + S2(B) - S2(AB)`` in nats; defaults to the two patch ends."""
    cfg = cfg or MomConfig()
    a = 0 if a is None else a
    b = set_.patch_length - 1 if b is None else b
    if a == b:
        raise ValueError("A and B must be distinct sites")
    p_a = purity_mom(set_, [a], cfg)
    p_b = purity_mom(set_, [b], cfg)
    p_ab = purity_mom(set_, [a, b], cfg)
    if min(p_a, p_b, p_ab) <= 0:
        raise EstimatorUndefined(f"non-positive purity estimate (A={p_a}, B={p_b}, AB={p_ab})")
    return math.log(p_ab / (p_a * p_b))


@dataclass
class MiResult:
    labels: np.ndarray
    scores: np.ndarray
    undefined: np.ndarray


def mi_classify(sets: list[ShadowSet], threshold: float, cfg: MomConfig | None = None) -> MiResult:
    """Label 1 (SSB) iff the mutual-information estimate exceeds ``threshold``.

    States whose estimate is undefined get score ``-inf`` and are flagged.
    """
    lengths = {s.patch_length for s in sets}
    if len(lengths) > 1:
        raise ValueError(f"mixed patch lengths {sorted(lengths)}")
    scores = np.empty(len(sets))
    undefined = np.zeros(len(sets), dtype=bool)
    for i, s in enumerate(sets):
        try:
            scores[i] = renyi2_mutual_information(s, cfg=cfg)
        except EstimatorUndefined:
            scores[i] = -np.inf
            undefined[i] = True
    return MiResult((scores > threshold).astype(np.int64), scores, undefined)

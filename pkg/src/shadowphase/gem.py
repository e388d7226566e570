"""Local geometric entanglement of a 4-site window (depth one).

For a window density matrix ``rho`` on sites 0..3 the objective is

    f(U01, U23, U12) = <00| U12 tr_{0,3}[ X rho X^dag ] U12^dag |00>,  X = U01 (x) U23

and ``L = -log max f``. Two-qubit gates use the same ordering as
:func:`shadowphase.qsim.apply_2q` (first site is the more significant factor).
``rho`` itself is little-endian like every density matrix in this package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .randunit import haar_unitary
from .shadows import ShadowSet, mean_snapshot

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8
_CG_RESTART = 20


@dataclass
class GemConfig:
    l: int = 4
    t: int = 1
    n_restarts: int = 8
    max_iters: int = 500
    step_tol: float = 1e-10
    obj_tol: float = 1e-9
    seed: int = 0
    strategy: str = "riemannian"

    def __post_init__(self):
        if (self.l, self.t) != (4, 1):
            raise ValueError("only l=4, t=1 is supported")
        if self.l < 4 * self.t:
            raise ValueError("need l >= 4t")
        if self.strategy not in ("riemannian", "polar"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class GemResult:
    value: float
    objective: float
    converged: bool
    restarts_used: int
    undefined: bool = False
    unitaries: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None


def _big_endian(rho: np.ndarray) -> np.ndarray:
    """Reorder a little-endian 4-qubit matrix so site 0 is the most significant bit."""
    t = rho.reshape((2,) * 8)
    return t.transpose(3, 2, 1, 0, 7, 6, 5, 4).reshape(16, 16)


def _check_inputs(rho: np.ndarray, us) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (16, 16):
        raise ValueError(f"need a 4-qubit density matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
        raise ValueError("density matrix is not Hermitian")
    for u in us:
        if np.linalg.norm(u.conj().T @ u - np.eye(4)) > UNITARY_TOL:
            raise ValueError("gate is not unitary")
    return rho


def _middle(m: np.ndarray) -> np.ndarray:
    """Trace out sites 0 and 3 of a 16x16 big-endian matrix."""
    return np.einsum("aibajb->ij", m.reshape(2, 4, 2, 2, 4, 2))


def _objective_be(r: np.ndarray, a, b, c) -> float:
    x = np.kron(a, b)
    sigma = _middle(x @ r @ x.conj().T)
    val = c[0] @ sigma @ c[0].conj()
    return float(val.real)


def gem_objective(rho: np.ndarray, u01: np.ndarray, u23: np.ndarray, u12: np.ndarray) -> float:
    """Overlap of the channel output with |00>; needs Hermitian ``rho`` only."""
    rho = _check_inputs(rho, (u01, u23, u12))
    return _objective_be(_big_endian(rho), u01, u23, u12)


def _euclidean_grads(r, a, b, c):
    """Gradients w.r.t. each unitary under Re tr(X^dag Y): 2 df/d conj(U)."""
    x = np.kron(a, b)
    proj = np.outer(c[0].conj(), c[0])          # U12^dag |00><00| U12
    big = np.kron(np.kron(np.eye(2), proj), np.eye(2))
    gx = 2 * big @ x @ r
    g4 = gx.reshape(4, 4, 4, 4)
    ga = np.einsum("abcd,bd->ac", g4, b.conj())
    gb = np.einsum("abcd,ac->bd", g4, a.conj())
    sigma = _middle(x @ r @ x.conj().T)
    gc = np.zeros((4, 4), dtype=np.complex128)
    gc[0] = 2 * c[0] @ sigma
    return ga, gb, gc


def riemannian_gradients(rho: np.ndarray, u01, u23, u12):
    """Skew-Hermitian ``W = G U^dag - U G^dag`` per unitary; ``W U`` is the ascent direction."""
    r = _big_endian(_check_inputs(rho, (u01, u23, u12)))
    us = (u01, u23, u12)
    return tuple(g @ u.conj().T - u @ g.conj().T for g, u in zip(_euclidean_grads(r, *us), us))


def cayley(w: np.ndarray, tau: float, u: np.ndarray) -> np.ndarray:
    eye = np.eye(w.shape[0])
    return np.linalg.solve(eye - 0.5 * tau * w, (eye + 0.5 * tau * w) @ u)


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.real(np.vdot(a, b)))


def _line_search(r, us, ds, f, slope, tau, dnorm, step_tol):
    """Armijo search along the Cayley curve; grows the trial step while it keeps paying off."""
    def at(step):
        cand = [cayley(d, step, u) for d, u in zip(ds, us)] + list(us[len(ds):])
        return _objective_be(r, *cand), cand

    fn, cand = at(tau)
    if fn >= f + 1e-4 * tau * slope:
        while tau < 1e3:
            f2, c2 = at(2 * tau)
            if f2 <= fn:
                break
            tau, fn, cand = 2 * tau, f2, c2
        return tau, fn, cand
    while tau * dnorm >= step_tol:
        tau *= 0.5
        fn, cand = at(tau)
        if fn >= f + 1e-4 * tau * slope:
            return tau, fn, cand
    return max(tau, 1e-12) * 4, f, us


def _polar(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def _best_final_brick(r, a, b) -> np.ndarray:
    """Optimal U12 for fixed outer gates: it rotates the top eigenvector of the middle block onto |00>."""
    x = np.kron(a, b)
    sigma = _middle(x @ r @ x.conj().T)
    _, vecs = np.linalg.eigh(0.5 * (sigma + sigma.conj().T))
    q, _ = np.linalg.qr(np.column_stack([vecs[:, -1], np.eye(4)]), mode="complete")
    return q.conj().T


def _ascend(r, us, cfg: GemConfig, trace: list | None = None):
    """Ascent from one start.

    The Riemannian strategy runs conjugate gradient (Polak-Ribiere+, restarted
    every ``_CG_RESTART`` steps) on the outer pair and solves the final brick
    exactly before every step; both moves are monotone.
    """
    us = [u.copy() for u in us]
    f = _objective_be(r, *us)
    tau = 1.0
    converged = False
    prev_w = prev_d = None
    prev_sq = 0.0
    stalls = 0
    for it in range(cfg.max_iters):
        if cfg.strategy == "polar":
            cand = list(us)
            for k in range(3):
                cand[k] = _polar(_euclidean_grads(r, *cand)[k])
            fn = _objective_be(r, *cand)
            if fn <= f + cfg.obj_tol:
                converged = True
                break
            us, f = cand, fn
            if trace is not None:
                trace.append(f)
            continue
        c = _best_final_brick(r, us[0], us[1])
        fc = _objective_be(r, us[0], us[1], c)
        if fc > f:
            us[2], f = c, fc
        gs = _euclidean_grads(r, *us)
        ws = [g @ u.conj().T - u @ g.conj().T for g, u in zip(gs[:2], us[:2])]
        wsq = sum(_inner(w, w) for w in ws)
        if math.sqrt(wsq) < cfg.step_tol:
            converged = True
            break
        beta = 0.0
        if prev_w is not None and it % _CG_RESTART:
            beta = max(0.0, sum(_inner(w, w - p) for w, p in zip(ws, prev_w)) / prev_sq)
        ds = [w + beta * d for w, d in zip(ws, prev_d)] if beta else ws
        slope = sum(_inner(w, d) for w, d in zip(ws, ds)) / 2
        if slope <= 0:
            ds, slope = ws, wsq / 2
        prev_w, prev_sq, prev_d = ws, wsq, ds
        dnorm = math.sqrt(sum(_inner(d, d) for d in ds))
        tau, fn, cand = _line_search(r, us, ds, f, slope, tau, dnorm, cfg.step_tol)
        gain = fn - f
        us[:2], f = cand[:2], fn
        if trace is not None:
            trace.append(f)
        stalls = stalls + 1 if gain <= cfg.obj_tol * max(1.0, abs(f)) else 0
        if stalls >= 3:
            converged = True
            break
    return f, us, converged


def local_gem(rho: np.ndarray, cfg: GemConfig | None = None, trace: list | None = None) -> GemResult:
    """Maximise the objective over three unitaries from the identity and random starts.

    ``L = -log(max f)``. A non-positive maximum (possible for non-positive
    tomographic estimates) returns ``inf`` with ``undefined=True``.
    """
    cfg = cfg or GemConfig()
    rho = _check_inputs(rho, ())
    r = _big_endian(rho)
    rng = np.random.default_rng(cfg.seed)
    starts = [(np.eye(4, dtype=complex),) * 3]
    starts += [tuple(haar_unitary(4, rng, size=3)) for _ in range(cfg.n_restarts)]
    best = (-math.inf, None, False)
    for s in starts:
        f, us, conv = _ascend(r, s, cfg, trace)
        if f > best[0]:
            best = (f, us, conv)
    f, us, conv = best
    if f <= 0:
        return GemResult(math.inf, f, conv, len(starts), True, tuple(us))
    return GemResult(-math.log(f), f, conv, len(starts), False, tuple(us))


def gem_window_offset(patch_start: int) -> int:
    """Offset inside the patch whose 4-site window is aligned with the brick-wall.

    The first gate pair of the window must coincide with a second-layer pair
    ``(odd, even)`` of the generating circuit.
    """
    return (1 - patch_start) % 2


@dataclass
class GemClassification:
    labels: np.ndarray
    values: np.ndarray
    objectives: np.ndarray
    undefined: np.ndarray
    converged: np.ndarray


def gem_score(set_: ShadowSet, offset: int = 0, cfg: GemConfig | None = None) -> GemResult:
    """Local GEM of the averaged tomographic estimate on sites ``offset..offset+3``."""
    if offset < 0 or offset + 4 > set_.patch_length:
        raise ValueError("4-site window does not fit in the patch")
    rho = mean_snapshot(set_, range(offset, offset + 4)).entries
    rho = 0.5 * (rho + rho.conj().T)
    return local_gem(rho, cfg)


def gem_classify(sets: list[ShadowSet], threshold: float, offset: int = 0,
                 cfg: GemConfig | None = None) -> GemClassification:
    """Label 1 (SSB) iff ``L > threshold``; undefined states get ``L = inf`` and a flag."""
    res = [gem_score(s, offset, cfg) for s in sets]
    values = np.array([r.value for r in res])
    return GemClassification((values > threshold).astype(np.int64), values,
                             np.array([r.objective for r in res]),
                             np.array([r.undefined for r in res]),
                             np.array([r.converged for r in res]))

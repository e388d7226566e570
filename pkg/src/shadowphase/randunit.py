"""Haar-random unitaries and the Euler-angle parameterization of U(2).

``U(theta, phi, chi) = Rz(phi) Rx(theta) Rz(chi)`` in the form

    [[cos(t/2) e^{i(p+c)/2},   i sin(t/2) e^{i(p-c)/2}],
     [i sin(t/2) e^{-i(p-c)/2}, cos(t/2) e^{-i(p+c)/2}]]

Storage ranges: theta in [0, 2pi), phi in [0, 2pi), chi in [-2pi, 2pi).
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

TWO_PI = 2 * np.pi
# float32 storage can nudge an angle just past the open end of its range
_RANGE_SLACK = 1e-5
_DEGENERATE = 1e-12


class EulerAngles(NamedTuple):
    theta: float
    phi: float
    chi: float


def haar_unitary(dim: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed U(dim) via QR of a complex Ginibre matrix."""
    if dim not in (2, 4):
        raise ValueError(f"unsupported dimension {dim}; expected 2 or 4")
    shape = (dim, dim) if size is None else (size, dim, dim)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    return q * (d / np.abs(d))[..., None, :]


def _check_ranges(theta, phi, chi) -> None:
    s = _RANGE_SLACK
    if (np.any(theta < -s) or np.any(theta >= TWO_PI + s) or np.any(phi < -s)
            or np.any(phi >= TWO_PI + s) or np.any(chi < -TWO_PI - s)
            or np.any(chi >= TWO_PI + s)):
        raise ValueError("Euler angles out of range")


def unitary_from_euler(theta, phi, chi) -> np.ndarray:
    """Matrix of ``U(theta, phi, chi)``; broadcasts over array arguments."""
    theta, phi, chi = (np.asarray(a, dtype=np.float64) for a in (theta, phi, chi))
    _check_ranges(theta, phi, chi)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ep = np.exp(0.5j * (phi + chi))
    em = np.exp(0.5j * (phi - chi))
    out = np.empty(np.broadcast(theta, phi, chi).shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c * ep
    out[..., 0, 1] = 1j * s * em
    out[..., 1, 0] = 1j * s / em
    out[..., 1, 1] = c / ep
    return out


def euler_from_unitary(u: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Decompose ``u = exp(i*alpha) U(theta, phi, chi)``.

    Works on a single 2x2 matrix or a stack ``(..., 2, 2)``. Returns angles
    with trailing axis ``(theta, phi, chi)`` and the phase ``alpha``. When
    ``u`` is diagonal or anti-diagonal only one combination of phi and chi is
    defined, and chi is fixed to zero.
    """
    u = np.asarray(u, dtype=np.complex128)
    gram = np.swapaxes(u.conj(), -1, -2) @ u
    if np.max(np.abs(gram - np.eye(2)), initial=0.0) > tol:
        raise ValueError("matrix is not unitary")
    det = np.linalg.det(u)
    v = u * np.exp(-0.5j * np.angle(det))[..., None, None]
    a00 = np.clip(np.abs(v[..., 0, 0]), 0.0, 1.0)
    # atan2 stays accurate near the poles where arccos(|u00|) loses half the digits
    theta = 2 * np.arctan2(np.abs(v[..., 0, 1]), np.abs(v[..., 0, 0]))
    sum_half = np.angle(v[..., 0, 0])               # (phi + chi) / 2
    diff_half = np.angle(v[..., 0, 1]) - np.pi / 2  # (phi - chi) / 2
    diag = a00 > 1 - _DEGENERATE
    anti = a00 < _DEGENERATE
    diff_half = np.where(diag, sum_half, diff_half)
    sum_half = np.where(anti, diff_half, sum_half)
    phi = sum_half + diff_half
    chi = sum_half - diff_half
    # each 2pi shift of phi or chi flips the overall sign, absorbed into alpha
    phi = np.mod(phi, TWO_PI)
    chi = np.mod(chi + TWO_PI, 2 * TWO_PI) - TWO_PI
    angles = np.stack([theta, phi, chi], axis=-1)
    rec = unitary_from_euler(theta, phi, chi)
    # phase from the largest-magnitude entry of the first row
    pick01 = np.abs(rec[..., 0, 1]) > np.abs(rec[..., 0, 0])
    num = np.where(pick01, u[..., 0, 1], u[..., 0, 0])
    den = np.where(pick01, rec[..., 0, 1], rec[..., 0, 0])
    alpha = np.angle(num / den)
    return angles, alpha

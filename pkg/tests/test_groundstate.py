import math

import numpy as np
import pytest

from shadowphase.groundstate import (AnnniParams, LanczosNotConverged, bkt_boundary,
                                     dense_even_ground_energy, dense_hamiltonian,
                                     hamiltonian_matvec, ising_boundary, lanczos_ground,
                                     parity_apply)


def test_matvec_matches_dense():
    p = AnnniParams(0.7, 0.3, N=8)
    v = np.random.default_rng(0).standard_normal(2**8)
    np.testing.assert_allclose(hamiltonian_matvec(p, v), dense_hamiltonian(p) @ v, atol=1e-12)


def test_parity_commutes():
    p = AnnniParams(1.3, 0.8, N=6)
    v = np.random.default_rng(1).standard_normal(2**6)
    np.testing.assert_allclose(hamiltonian_matvec(p, parity_apply(v)),
                               parity_apply(hamiltonian_matvec(p, v)), atol=1e-12)


@pytest.mark.parametrize("g,kappa", [(0.3, 0.0), (1.0, 0.0), (1.7, 0.4), (0.5, 1.2)])
def test_lanczos_matches_dense(g, kappa):
    p = AnnniParams(g, kappa, N=8)
    res = lanczos_ground(p)
    even, _ = dense_even_ground_energy(p)
    assert abs(res.energy - even) < 1e-8
    assert res.sector_even
    psi = res.state.amplitudes.real
    assert abs(np.linalg.norm(psi) - 1) < 1e-12


def test_free_fermion_energy():
    # kappa = 0 even sector: antiperiodic fermion momenta
    n, g = 10, 0.8
    ks = np.pi * (2 * np.arange(n) + 1) / n
    exact = -np.sum(np.sqrt(1 + g * g - 2 * g * np.cos(ks)))
    assert abs(lanczos_ground(AnnniParams(g, 0.0, N=n)).energy - exact) < 1e-8


def test_classical_limit():
    res = lanczos_ground(AnnniParams(0.0, 0.0, N=8))
    assert abs(res.energy + 8) < 1e-9
    amps = res.state.amplitudes
    assert abs(abs(amps[0]) ** 2 - 0.5) < 1e-8 and abs(abs(amps[-1]) ** 2 - 0.5) < 1e-8


def test_not_converged_raises_with_result():
    with pytest.raises(LanczosNotConverged) as exc:
        lanczos_ground(AnnniParams(1.0, 0.5, N=10), max_iter=3)
    assert exc.value.result.iterations == 3


def test_params_validation():
    with pytest.raises(ValueError):
        AnnniParams(-0.1)
    with pytest.raises(ValueError):
        AnnniParams(1.0, N=21)
    with pytest.raises(ValueError):
        dense_hamiltonian(AnnniParams(1.0, N=14))


def test_boundaries():
    assert ising_boundary(0.0) == 1.0
    assert ising_boundary(0.5) == 0.0
    assert bkt_boundary(0.5) == 0.0
    assert abs(ising_boundary(0.2) - 0.6533) < 1e-4
    assert abs(ising_boundary(1e-12) - 1) < 1e-10
    assert math.isclose(bkt_boundary(1.0), 1.05 * math.sqrt(0.5 * 0.9))
    with pytest.raises(ValueError):
        ising_boundary(0.6)
    with pytest.raises(ValueError):
        bkt_boundary(0.4)

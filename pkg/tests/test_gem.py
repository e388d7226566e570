import itertools
import math

import numpy as np
import pytest

from shadowphase.datagen import GenConfig, evolved_state
from shadowphase.gem import (GemConfig, _ascend, _big_endian, _euclidean_grads, _objective_be, cayley,
                             gem_classify, gem_objective, gem_score, gem_window_offset,
                             local_gem, riemannian_gradients)
from shadowphase.qsim import Statevector, new_ghz, reduced_density_matrix
from shadowphase.randunit import haar_unitary
from shadowphase.shadows import ShadowSet, measure_shadows

# controlled-NOTs on a site pair, the first site being the high bit of the 4x4 index
CNOT_FIRST_CONTROLS = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], complex)
CNOT_SECOND_CONTROLS = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], complex)


def random_rho(rng, rank=3):
    a = rng.standard_normal((16, rank)) + 1j * rng.standard_normal((16, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def oracle_objective(rho, u01, u23, u12):
    """Explicit sum over every index of the little-endian density tensor."""
    t = rho.reshape((2,) * 8)  # (s3 s2 s1 s0, s3' s2' s1' s0')
    a = u01.reshape(2, 2, 2, 2)  # (out0, out1, in0, in1)
    b = u23.reshape(2, 2, 2, 2)
    c = u12[0].reshape(2, 2)  # <00| U12
    out = 0j
    for x0, x3, m1, m2, n1, n2 in itertools.product(range(2), repeat=6):
        w = c[m1, m2] * np.conj(c[n1, n2])
        for i0, i1, i2, i3, j0, j1, j2, j3 in itertools.product(range(2), repeat=8):
            out += (w * a[x0, m1, i0, i1] * b[m2, x3, i2, i3]
                    * np.conj(a[x0, n1, j0, j1] * b[n2, x3, j2, j3])
                    * t[i3, i2, i1, i0, j3, j2, j1, j0])
    return out.real


def product_rho(rng):
    amps = np.ones(1)
    for _ in range(4):
        amps = np.kron(haar_unitary(2, rng)[:, 0], amps)
    return np.outer(amps, amps.conj())


def test_objective_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(3):
        rho = random_rho(rng)
        us = haar_unitary(4, rng, size=3)
        assert abs(gem_objective(rho, *us) - oracle_objective(rho, *us)) < 1e-12


def test_objective_is_a_probability_for_states():
    rng = np.random.default_rng(1)
    for _ in range(20):
        f = gem_objective(random_rho(rng, 16), *haar_unitary(4, rng, size=3))
        assert -1e-12 <= f <= 1 + 1e-12


def test_input_validation():
    with pytest.raises(ValueError):
        gem_objective(np.eye(8), *np.eye(4)[None].repeat(3, 0))
    with pytest.raises(ValueError):
        gem_objective(np.triu(np.ones((16, 16))), *np.eye(4)[None].repeat(3, 0))
    with pytest.raises(ValueError):
        gem_objective(np.eye(16) / 16, 2 * np.eye(4), np.eye(4), np.eye(4))
    with pytest.raises(ValueError):
        GemConfig(l=6)
    with pytest.raises(ValueError):
        GemConfig(strategy="adam")


def test_euclidean_gradient_finite_difference():
    rng = np.random.default_rng(2)
    r = _big_endian(random_rho(rng))
    us = list(haar_unitary(4, rng, size=3))
    grads = _euclidean_grads(r, *us)
    eps = 1e-6
    for k in range(3):
        e = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        up, dn = list(us), list(us)
        up[k] = us[k] + eps * e
        dn[k] = us[k] - eps * e
        num = (_objective_be(r, *up) - _objective_be(r, *dn)) / (2 * eps)
        ana = np.real(np.vdot(grads[k], e))
        assert abs(num - ana) <= 1e-6 * max(1, abs(ana))


def test_riemannian_gradient_is_skew_and_tangent():
    rng = np.random.default_rng(3)
    rho = random_rho(rng)
    us = haar_unitary(4, rng, size=3)
    for w, u in zip(riemannian_gradients(rho, *us), us):
        np.testing.assert_allclose(w, -w.conj().T, atol=1e-12)
    # the Cayley curve along +W ascends with initial slope ||W||^2 / 2
    r = _big_endian(rho)
    w = riemannian_gradients(rho, *us)[0]
    h = 1e-6
    up = _objective_be(r, cayley(w, h, us[0]), us[1], us[2])
    dn = _objective_be(r, cayley(w, -h, us[0]), us[1], us[2])
    slope = np.real(np.vdot(w, w)) / 2
    assert abs((up - dn) / (2 * h) - slope) <= 1e-6 * max(1, slope)


def test_cayley_stays_unitary():
    rng = np.random.default_rng(4)
    u = haar_unitary(4, rng)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    w = m - m.conj().T
    for tau in (1e-3, 1.0, 50.0):
        y = cayley(w, tau, u)
        np.testing.assert_allclose(y.conj().T @ y, np.eye(4), atol=1e-10)


@pytest.mark.parametrize("strategy", ["riemannian", "polar"])
def test_ascent_is_monotone(strategy):
    rng = np.random.default_rng(5)
    r = _big_endian(random_rho(rng, 2))
    trace = []
    f0 = _objective_be(r, *[np.eye(4)] * 3)
    _ascend(r, tuple(haar_unitary(4, rng, size=3)), GemConfig(strategy=strategy), trace)
    assert len(trace) > 1 and np.all(np.diff(trace) >= -1e-12)
    assert trace[-1] >= f0 - 1e-12 or trace[-1] > trace[0]


@pytest.mark.parametrize("strategy", ["riemannian", "polar"])
def test_product_marginals_vanish(strategy):
    rng = np.random.default_rng(6)
    for _ in range(5):
        res = local_gem(product_rho(rng), GemConfig(n_restarts=1, strategy=strategy))
        assert res.value <= 1e-6 and not res.undefined


def test_fdlu_witness_aligned_window():
    cfg = GenConfig(0, N=8, l=4, t=1, n_b=1, seed=3)
    for idx in range(3):
        psi = evolved_state(cfg, idx)
        rho = reduced_density_matrix(psi, 1, 4).entries
        assert local_gem(rho, GemConfig(n_restarts=2)).value <= 1e-4


def test_window_offset_alignment():
    assert gem_window_offset(1) == 0 and gem_window_offset(5) == 0
    assert gem_window_offset(0) == 1 and gem_window_offset(4) == 1


def test_ghz_marginal_witness_reaches_one():
    # CNOTs controlled by the boundary sites clear the middle pair exactly
    rho = reduced_density_matrix(new_ghz(8), 2, 4).entries
    f = gem_objective(rho, CNOT_FIRST_CONTROLS, CNOT_SECOND_CONTROLS, np.eye(4))
    assert abs(f - 1) < 1e-14
    res = local_gem(rho)
    assert res.objective >= 1 - 1e-8 and res.value <= 1e-8


def test_maximally_mixed_value():
    # any channel output stays I/4 on the middle pair
    res = local_gem(np.eye(16) / 16, GemConfig(n_restarts=1))
    assert abs(res.objective - 0.25) < 1e-10
    assert abs(res.value - math.log(4)) < 1e-9


def test_non_positive_input_flagged():
    res = local_gem(-np.eye(16) / 16, GemConfig(n_restarts=1))
    assert res.undefined and res.value == math.inf


def test_raw_shadow_estimates_never_crash():
    rng = np.random.default_rng(7)
    psi = new_ghz(6)
    sets = [measure_shadows(psi, 1, 4, n, rng) for n in (1, 2, 5)]
    out = gem_classify(sets, 0.1, cfg=GemConfig(n_restarts=1, max_iters=100))
    assert out.values.shape == (3,)
    assert np.all(np.isfinite(out.values) | out.undefined)


def test_gem_score_window_guard():
    s = ShadowSet(np.zeros((3, 5, 4), np.float32))
    with pytest.raises(ValueError):
        gem_score(s, offset=2)

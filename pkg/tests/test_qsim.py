import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from shadowphase.qsim import (MAX_RDM_LENGTH, QsimError, Statevector, apply_1q, apply_2q,
                              new_all_ones, new_ghz, new_product_plus, patch_factor, patch_mps,
                              reduced_density_matrix, sample_z, window_probabilities)
from shadowphase.randunit import haar_unitary

X = np.array([[0, 1], [1, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT_C0 = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def random_state(n, rng):
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return Statevector.from_amplitudes(v / np.linalg.norm(v))


def dense_rdm(psi, first, length):
    """Oracle: explicit sum over basis indices of the traced qubits."""
    n = psi.n_qubits
    mask = ((1 << length) - 1) << first
    rho = np.zeros((2**length, 2**length), dtype=complex)
    for i in range(2**n):
        for j in range(2**n):
            if i & ~mask == j & ~mask:
                rho[(i & mask) >> first, (j & mask) >> first] += (
                    psi.amplitudes[i] * psi.amplitudes[j].conj())
    return rho


# ---- constructors

def test_product_plus_amplitudes():
    np.testing.assert_allclose(new_product_plus(1).amplitudes, [2**-0.5] * 2, atol=1e-15)
    np.testing.assert_allclose(new_product_plus(2).amplitudes, [0.5] * 4, atol=1e-15)
    assert abs(new_product_plus(16).norm() - 1) < 1e-12


def test_all_ones_and_ghz():
    np.testing.assert_array_equal(new_all_ones(2).amplitudes, [0, 0, 0, 1])
    np.testing.assert_array_equal(new_all_ones(1).amplitudes, [0, 1])
    assert np.flatnonzero(new_all_ones(3).amplitudes).tolist() == [7]
    np.testing.assert_allclose(new_ghz(2).amplitudes, [2**-0.5, 0, 0, 2**-0.5], atol=1e-15)
    assert np.flatnonzero(new_ghz(3).amplitudes).tolist() == [0, 7]
    for n in range(2, 10):
        assert abs(new_ghz(n).norm() - 1) < 1e-14


@pytest.mark.parametrize("make,n", [(new_product_plus, 0), (new_product_plus, 25),
                                    (new_all_ones, 0), (new_ghz, 1), (new_ghz, 25)])
def test_size_out_of_range(make, n):
    with pytest.raises(QsimError):
        make(n)


# ---- gates

def test_x_flips_zero():
    psi = Statevector.from_amplitudes([1, 0])
    apply_1q(psi, 0, X)
    np.testing.assert_array_equal(psi.amplitudes, [0, 1])


def test_identity_is_bit_exact():
    psi = random_state(5, np.random.default_rng(0))
    before = psi.amplitudes.copy()
    apply_1q(psi, 3, np.eye(2))
    apply_2q(psi, 4, np.eye(4))
    assert psi.amplitudes.tobytes() == before.tobytes()


def test_hadamard_twice():
    psi = random_state(4, np.random.default_rng(1))
    before = psi.amplitudes.copy()
    apply_1q(psi, 2, H)
    apply_1q(psi, 2, H)
    np.testing.assert_allclose(psi.amplitudes, before, atol=1e-12)


def test_cnot_truth_table():
    psi = Statevector.from_amplitudes([0, 1, 0, 0])  # qubit 0 set: |10> in site order
    apply_2q(psi, 0, CNOT_C0)
    np.testing.assert_array_equal(psi.amplitudes, [0, 0, 0, 1])


def test_factorised_gate_matches_single_qubit_path():
    rng = np.random.default_rng(2)
    a, b = haar_unitary(2, rng), haar_unitary(2, rng)
    for site in range(5):
        psi = random_state(5, rng)
        ref = psi.copy()
        apply_2q(psi, site, np.kron(a, b))
        apply_1q(ref, site, a)
        apply_1q(ref, (site + 1) % 5, b)
        np.testing.assert_allclose(psi.amplitudes, ref.amplitudes, atol=1e-12)


def test_gate_then_inverse():
    rng = np.random.default_rng(3)
    u = haar_unitary(4, rng)
    psi = random_state(6, rng)
    before = psi.amplitudes.copy()
    apply_2q(psi, 5, u)
    apply_2q(psi, 5, u.conj().T)
    np.testing.assert_allclose(psi.amplitudes, before, atol=1e-12)


def test_gate_errors():
    psi = new_product_plus(3)
    with pytest.raises(QsimError):
        apply_1q(psi, 0, np.array([[1, 1], [0, 1]]))
    with pytest.raises(QsimError):
        apply_1q(psi, 3, X)
    with pytest.raises(QsimError):
        apply_2q(psi, -1, np.eye(4))
    with pytest.raises(QsimError):
        apply_2q(psi, 0, 1.1 * np.eye(4))


def test_wrap_equals_cyclic_shift():
    rng = np.random.default_rng(4)
    n = 5
    u = haar_unitary(4, rng)
    psi = random_state(n, rng)
    wrapped = psi.copy()
    apply_2q(wrapped, n - 1, u)
    # relabel qubit q -> q+1 mod n so the pair (n-1, 0) becomes (0, 1)
    idx = np.arange(2**n)
    bits = (idx[:, None] >> np.arange(n)) & 1
    shifted_idx = (np.roll(bits, 1, axis=1) << np.arange(n)).sum(axis=1)
    shifted = Statevector.from_amplitudes(np.empty(2**n, complex))
    shifted.amplitudes[shifted_idx] = psi.amplitudes
    apply_2q(shifted, 0, u)
    np.testing.assert_allclose(shifted.amplitudes[shifted_idx], wrapped.amplitudes, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_gates=st.integers(1, 300))
def test_norm_preserved(seed, n_gates):
    rng = np.random.default_rng(seed)
    n = 6
    psi = random_state(n, rng)
    for _ in range(n_gates):
        if rng.random() < 0.5:
            apply_1q(psi, int(rng.integers(n)), haar_unitary(2, rng))
        else:
            apply_2q(psi, int(rng.integers(n)), haar_unitary(4, rng))
    assert abs(psi.norm() - 1) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), site=st.integers(0, 7))
def test_locality(seed, site):
    rng = np.random.default_rng(seed)
    psi = random_state(8, rng)
    touched = {site, (site + 1) % 8}
    windows = [(f, ln) for f in range(8) for ln in (1, 2, 3) if f + ln <= 8
               and not touched & set(range(f, f + ln))]
    before = {w: reduced_density_matrix(psi, *w).entries for w in windows}
    apply_2q(psi, site, haar_unitary(4, rng))
    for w in windows:
        np.testing.assert_allclose(reduced_density_matrix(psi, *w).entries, before[w], atol=1e-10)


# ---- reduced density matrices

def test_ghz_marginal():
    rho = reduced_density_matrix(new_ghz(8), 2, 4).entries
    ref = np.zeros((16, 16))
    ref[0, 0] = ref[15, 15] = 0.5
    np.testing.assert_allclose(rho, ref, atol=1e-14)


def test_product_marginal_is_projector():
    rho = reduced_density_matrix(new_product_plus(8), 3, 2).entries
    np.testing.assert_allclose(rho, np.full((4, 4), 0.25), atol=1e-14)
    np.testing.assert_allclose(rho @ rho, rho, atol=1e-14)


@pytest.mark.parametrize("first", [0, 1, 2, 3])
def test_rdm_matches_dense_oracle(first):
    psi = random_state(6, np.random.default_rng(first))
    rho = reduced_density_matrix(psi, first, 3).entries
    np.testing.assert_allclose(rho, dense_rdm(psi, first, 3), atol=1e-12)
    w = np.linalg.eigvalsh(rho)
    assert abs(w.sum() - 1) < 1e-10 and w.min() >= -1e-12
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-12)


def test_rdm_errors():
    psi = new_product_plus(14)
    with pytest.raises(QsimError):
        reduced_density_matrix(psi, 10, 5)
    with pytest.raises(QsimError):
        reduced_density_matrix(psi, 0, MAX_RDM_LENGTH + 1)


# ---- sampling

def test_sample_deterministic_state():
    bits = sample_z(new_all_ones(2), 0, 2, np.random.default_rng(0), shots=50)
    assert np.all(bits == 1)


def test_sample_ghz_all_equal():
    bits = sample_z(new_ghz(6), 0, 6, np.random.default_rng(1), shots=10_000)
    s = bits.sum(axis=1)
    assert set(np.unique(s)) <= {0, 6}
    assert abs(np.mean(s == 6) - 0.5) < 0.02


def test_sample_uniform_chi_square():
    rng = np.random.default_rng(2)
    bits = sample_z(new_product_plus(4), 0, 4, rng, shots=100_000)
    counts = np.bincount((bits << np.arange(4)).sum(axis=1), minlength=16)
    expected = 100_000 / 16
    chi2 = ((counts - expected) ** 2 / expected).sum()
    # 15 dof: mean 15, sd sqrt(30); 3 sigma bound
    assert chi2 < 15 + 3 * np.sqrt(30)


def test_sample_leaves_state_untouched():
    psi = random_state(5, np.random.default_rng(3))
    before = psi.amplitudes.copy()
    sample_z(psi, 1, 3, np.random.default_rng(4), shots=100)
    assert psi.amplitudes.tobytes() == before.tobytes()


def test_sample_marginal_consistency():
    rng = np.random.default_rng(5)
    psi = random_state(7, rng)
    n = 20_000
    bits = sample_z(psi, 2, 3, rng, shots=n)
    freq = np.bincount((bits << np.arange(3)).sum(axis=1), minlength=8) / n
    diag = np.real(np.diag(reduced_density_matrix(psi, 2, 3).entries))
    np.testing.assert_allclose(window_probabilities(psi, 2, 3), diag, atol=1e-12)
    assert 0.5 * np.abs(freq - diag).sum() <= 5 / np.sqrt(n)


# ---- patch factorisations used by the shadow sampler

def test_patch_factor_reproduces_rdm():
    psi = random_state(8, np.random.default_rng(6))
    k = patch_factor(psi, 2, 4)
    np.testing.assert_allclose(k.T @ k.conj(), reduced_density_matrix(psi, 2, 4).entries, atol=1e-12)


def test_patch_mps_reproduces_rdm():
    psi = random_state(8, np.random.default_rng(7))
    heads, tensors = patch_mps(psi, 1, 5)
    for t in tensors:  # right-canonical
        m = t.reshape(t.shape[0], -1)
        np.testing.assert_allclose(m @ m.conj().T, np.eye(t.shape[0]), atol=1e-12)
    # contract back to the rank factor and compare density matrices
    amp = heads
    for t in tensors:
        amp = np.tensordot(amp, t, axes=([-1], [0]))
    amp = amp.reshape(amp.shape[0], -1)  # site order: first site most significant
    l = len(tensors)
    amp = amp.reshape((amp.shape[0],) + (2,) * l).transpose([0] + list(range(l, 0, -1)))
    amp = amp.reshape(amp.shape[0], -1)
    np.testing.assert_allclose(amp.T @ amp.conj(), reduced_density_matrix(psi, 1, 5).entries,
                               atol=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from microtrap_gate.correlations import (
    UndefinedEntropyError,
    amplitudes_to_mode_matrix,
    bosonic_entropy,
    correlation_sample,
    mode_matrix_to_amplitudes,
    occupation_entropy,
    occupation_matrix,
    projected_entropy,
    slater_spectrum,
    takagi,
)
from microtrap_gate.gate_analysis import SQRT_SWAP
from microtrap_gate.tp_basis import LABELS, AmplitudeVector, computational_embedding, enumerate_basis

BASIS = enumerate_basis(8)
R = 1 / math.sqrt(2)


def embedded(amplitudes):
    """State with the given amplitudes on the four computational embeddings."""
    c = sum(a * computational_embedding(lab, BASIS).coefficients for a, lab in zip(amplitudes, LABELS))
    return AmplitudeVector(np.asarray(c, dtype=complex), BASIS)


def sqrt_swap_01():
    return embedded(SQRT_SWAP[:, 1])


def double_00():
    c = np.zeros(BASIS.dimension, dtype=complex)
    c[BASIS.index((0, 0), +1, "double")] = R
    c[BASIS.index((0, 0), -1, "double")] = R
    return AmplitudeVector(c, BASIS)


def random_state(rng):
    c = rng.normal(size=BASIS.dimension) + 1j * rng.normal(size=BASIS.dimension)
    return AmplitudeVector(c / np.linalg.norm(c), BASIS)


def random_symmetric(rng, n):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return m + m.T


def test_mode_matrix_examples():
    v = amplitudes_to_mode_matrix(computational_embedding("01", BASIS))
    expected = np.zeros((8, 8))
    expected[0, 5] = expected[5, 0] = 0.5  # 0L, 1R
    assert np.allclose(v, expected, atol=1e-15)
    d = amplitudes_to_mode_matrix(double_00())
    expected = np.zeros((8, 8))
    expected[0, 0] = R  # both atoms in 0L
    assert np.allclose(d, expected, atol=1e-15)


def test_mode_matrix_normalisation_and_roundtrip():
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = random_state(rng)
        m = amplitudes_to_mode_matrix(v)
        assert np.array_equal(m, m.T)
        assert np.trace(m.conj().T @ m).real == pytest.approx(0.5, abs=1e-10)
        assert np.max(np.abs(mode_matrix_to_amplitudes(m, BASIS) - v.coefficients)) < 1e-12


def test_takagi_examples():
    u, lam = takagi(np.array([[0, 0.5], [0.5, 0]]))
    assert lam == pytest.approx([0.5, 0.5], abs=1e-14)
    diag = np.array([0.7, 0.2, 0.1])
    u, lam = takagi(np.diag(diag))
    assert lam == pytest.approx(diag, abs=1e-14)
    assert np.allclose(np.abs(u), np.eye(3), atol=1e-12)
    u, lam = takagi(np.zeros((3, 3)))
    assert np.all(lam == 0) and np.allclose(u, np.eye(3))


def test_takagi_random_contract_1000():
    rng = np.random.default_rng(2024)
    worst_rec = worst_unit = worst_inv = 0.0
    for k in range(1000):
        n = 2 + k % 7
        v = random_symmetric(rng, n)
        u, lam = takagi(v)
        assert np.all(np.diff(lam) <= 1e-12) and np.all(lam >= 0)
        worst_rec = max(worst_rec, np.max(np.abs(u @ np.diag(lam) @ u.T - v)))
        worst_unit = max(worst_unit, np.max(np.abs(u.conj().T @ u - np.eye(n))))
        w = unitary_group.rvs(n, random_state=rng)
        _, lam_rot = takagi(w @ v @ w.T)
        worst_inv = max(worst_inv, np.max(np.abs(lam_rot - lam)))
    assert worst_rec < 1e-10 and worst_unit < 1e-10 and worst_inv < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_takagi_rank_deficient(n, rank, seed):
    # degenerate and zero Takagi values still give a unitary factor
    rank = min(rank, n)
    rng = np.random.default_rng(seed)
    w = unitary_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
    lam = np.zeros(n)
    lam[:rank] = rng.choice([0.3, 1.0], size=rank)
    v = w @ np.diag(lam) @ w.T
    u, got = takagi(v)
    assert np.max(np.abs(u @ np.diag(got) @ u.T - v)) < 1e-10
    assert np.max(np.abs(u.conj().T @ u - np.eye(n))) < 1e-10
    assert got == pytest.approx(np.sort(lam)[::-1], abs=1e-10)


def test_bosonic_entropy_examples():
    s01 = slater_spectrum(amplitudes_to_mode_matrix(computational_embedding("01", BASIS)))
    assert s01.rank == 2 and s01.entropy == pytest.approx(1.0, abs=1e-12)
    assert np.sum(s01.coefficients**2) == pytest.approx(0.5, abs=1e-12)
    s_gate = slater_spectrum(amplitudes_to_mode_matrix(sqrt_swap_01()))
    assert s_gate.rank == 4 and s_gate.entropy == pytest.approx(2.0, abs=1e-12)
    s_dbl = slater_spectrum(amplitudes_to_mode_matrix(double_00()))
    assert s_dbl.rank == 1 and s_dbl.entropy == pytest.approx(0.0, abs=1e-12)
    # unnormalised Slater weights: a rank-1 state then carries 1/2 bit
    assert bosonic_entropy(s_dbl, raw=True) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(UndefinedEntropyError):
        bosonic_entropy(np.zeros(3))


def test_projected_entropy_examples():
    s, p = projected_entropy(computational_embedding("01", BASIS))
    assert s == pytest.approx(0.0, abs=1e-12) and p == pytest.approx(1.0)
    s, p = projected_entropy(sqrt_swap_01())
    assert s == pytest.approx(1.0, abs=1e-12) and p == pytest.approx(1.0)
    mixed = AmplitudeVector(R * (computational_embedding("01", BASIS).coefficients
                                 + double_00().coefficients), BASIS)
    assert projected_entropy(mixed)[1] == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(UndefinedEntropyError):
        projected_entropy(double_00())


def test_occupation_entropy_examples():
    assert occupation_entropy(computational_embedding("01", BASIS)) == pytest.approx(0.0, abs=1e-12)
    assert occupation_entropy(sqrt_swap_01()) == pytest.approx(1.0, abs=1e-12)
    # both atoms in the left trap: definite left/right occupation split
    assert occupation_entropy(double_00()) == pytest.approx(0.0, abs=1e-12)


def test_occupation_matrix_is_normalised():
    rng = np.random.default_rng(11)
    for _ in range(10):
        psi = occupation_matrix(random_state(rng))
        assert np.sum(np.abs(psi) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_occupation_entropy_against_first_quantised_reduction():
    # independent route: with one atom per side, S_Z equals the entropy of the
    # distinguishable-particle reduction of the L x R block of the wavefunction
    rng = np.random.default_rng(5)
    c = np.zeros(BASIS.dimension, dtype=complex)
    for k in range(BASIS.dimension):
        if not BASIS.double_mask[k]:
            c[k] = rng.normal() + 1j * rng.normal()
    v = AmplitudeVector(c / np.linalg.norm(c), BASIS)
    t = v.tensor()
    block = math.sqrt(2.0) * t[:4, 4:]
    assert np.sum(np.abs(block) ** 2) == pytest.approx(1.0, abs=1e-12)
    ev = np.linalg.eigvalsh(block @ block.conj().T)
    ev = ev[ev > 1e-15]
    assert occupation_entropy(v) == pytest.approx(-np.sum(ev * np.log2(ev)), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * math.pi), st.integers(0, 2**32 - 1))
def test_entropies_global_phase_invariant(phi, seed):
    v = random_state(np.random.default_rng(seed))
    w = AmplitudeVector(np.exp(1j * phi) * v.coefficients, BASIS)
    a, b = correlation_sample(v), correlation_sample(w)
    assert a.bosonic_entropy == pytest.approx(b.bosonic_entropy, abs=1e-10)
    assert a.projected_entropy == pytest.approx(b.projected_entropy, abs=1e-10)
    assert a.occupation_entropy == pytest.approx(b.occupation_entropy, abs=1e-10)


def test_sample_row_columns():
    row = correlation_sample(sqrt_swap_01()).row()
    assert set(row) == {"time", "S_B_half", "slater_rank", "S", "p_single", "S_p_single", "S_Z"}
    assert row["S_B_half"] == pytest.approx(1.0) and row["S_p_single"] == pytest.approx(1.0)

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from microtrap_gate.gate_analysis import (
    CNOT,
    SQRT_SWAP,
    SWAP,
    GateMatrix,
    GateSettings,
    averaged_fidelity,
    distance_up_to_phase,
    fidelity_map,
    hamiltonian_table,
    local_sigma,
    phase_gate_composition,
    process_overlap,
    reconstruct_gate,
    sweep_scattering,
    universality_suite,
)
from microtrap_gate.physical_model import (
    BOHR_RADIUS,
    MASS_RB87,
    PhysicalParams,
    derive_dimensionless,
)
from microtrap_gate.tp_basis import computational_extraction

FAST = GateSettings(knots=81)
SHORT = PhysicalParams(1.25e4, 7.9e6, MASS_RB87, 106 * BOHR_RADIUS, 3.0, 2.0, 10.0, 4.0)


@pytest.fixture(scope="module")
def table():
    return hamiltonian_table(1.9, 3.0, 8, FAST.knots)


@pytest.fixture(scope="module")
def short_gate(table):
    return reconstruct_gate(derive_dimensionless(SHORT), FAST, table)


def test_fidelity_examples():
    assert averaged_fidelity(SQRT_SWAP, SQRT_SWAP) == pytest.approx(1.0)
    assert averaged_fidelity(np.eye(4), SQRT_SWAP) == pytest.approx(0.75, abs=1e-15)
    assert averaged_fidelity(GateMatrix(SWAP), GateMatrix(SWAP)) == pytest.approx(1.0)
    # columns differing only by phases are invisible to the averaged fidelity
    assert averaged_fidelity(SQRT_SWAP @ np.diag([1, 1j, -1, 1]), SQRT_SWAP) == pytest.approx(1.0)
    assert process_overlap(SQRT_SWAP @ np.diag([1, 1j, -1, 1]), SQRT_SWAP) < 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * math.pi), st.integers(0, 2**32 - 1))
def test_fidelity_invariances(phi, seed):
    u = unitary_group.rvs(4, random_state=np.random.default_rng(seed))
    assert averaged_fidelity(u, u) == pytest.approx(1.0, abs=1e-12)
    f = averaged_fidelity(u)
    assert averaged_fidelity(np.exp(1j * phi) * u) == pytest.approx(f, abs=1e-12)
    assert 0.0 <= f <= 1.0 + 1e-12


def test_universality_algebra():
    report = universality_suite()
    assert report["sqrt_swap_squared"] == 0.0
    for key in ("sigma", "phase_gate", "cnot", "cnot_reversed"):
        assert report[key] <= 1e-14, key
    assert np.allclose(local_sigma(), np.diag([1, -1j]), atol=1e-15)


def test_phase_gate_independent_check():
    # diag(1,1,1,-1) up to a global phase: ratios of diagonal entries, zero off-diagonals
    p = phase_gate_composition()
    assert np.max(np.abs(p - np.diag(np.diag(p)))) < 1e-15
    d = np.diag(p) / p[0, 0]
    assert d == pytest.approx([1, 1, 1, -1], abs=1e-15)
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    hb = np.kron(np.eye(2), h)
    assert distance_up_to_phase(hb @ p @ hb, CNOT) < 1e-15


def test_distance_up_to_phase():
    u = unitary_group.rvs(4, random_state=np.random.default_rng(3))
    assert distance_up_to_phase(np.exp(0.7j) * u, u) < 1e-14
    assert distance_up_to_phase(u, np.eye(4)) > 0.1


def test_gate_matrix_leakage_default():
    m = np.diag([1.0, math.sqrt(0.5), 1.0, 1.0])
    gate = GateMatrix(m)
    assert gate.leakage == pytest.approx([0, 0.5, 0, 0])
    assert (gate @ gate).matrix[1, 1] == pytest.approx(0.5)


def test_reconstruct_structure(short_gate):
    u = short_gate.matrix
    assert abs(u[0, 0].imag) < 1e-15 and u[0, 0].real > 0
    assert np.all(np.sum(np.abs(u) ** 2, axis=0) <= 1 + 1e-8)
    # leakage per column is the extraction's double + other weight
    for j, v in enumerate(short_gate.finals):
        x = computational_extraction(v)
        assert short_gate.leakage[j] == pytest.approx(x.p_double + x.p_leak, abs=1e-10)
    # mirror symmetry: even inputs reach |01> and |10> only through |01>+, with equal weight
    assert np.max(np.abs(u[1, [0, 3]] - u[2, [0, 3]])) < 1e-10
    assert np.max(np.abs(u[[0, 3], 1] - u[[0, 3], 2])) < 1e-10
    if np.max(short_gate.leakage) < 1e-3:
        assert short_gate.unitarity_error() < 1e-3


def test_decoupled_run_is_identity():
    # at a = 5 tunnelling is negligible; at the short trajectory's a_max = 3 it is not
    model = derive_dimensionless(replace(SHORT, a_max=5.0))
    gate = reconstruct_gate(model, FAST, decoupled=True)
    assert np.max(np.abs(gate.matrix - np.eye(4))) < 1e-6
    assert gate.norm_drift < 1e-8


def test_sweep_deterministic_and_records_errors(table):
    values = [0.0, 106 * BOHR_RADIUS, float("nan")]
    serial = sweep_scattering(SHORT, values, FAST, workers=1)
    parallel = sweep_scattering(SHORT, values, FAST, workers=2)
    assert [r["status"] for r in serial][:2] == ["ok", "ok"]
    assert serial[2]["status"].startswith("error")
    for a, b in zip(serial[:2], parallel[:2]):
        assert a == b
    assert serial[0]["g"] == 0.0 and serial[1]["a_t_bohr"] == pytest.approx(106.0)
    with pytest.raises(ValueError):
        sweep_scattering(SHORT, [], FAST)


def test_fidelity_map_checkpoint(tmp_path, table):
    ckpt = tmp_path / "map.jsonl"
    fmap = fidelity_map(SHORT, [10.0], [2.0, 3.5], 4.0, FAST, checkpoint=str(ckpt))
    assert fmap.fidelity.shape == (1, 2)
    assert np.isfinite(fmap.fidelity[0, 0]) and np.isnan(fmap.fidelity[0, 1])
    assert fmap.best()["a_min"] == 2.0
    lines = ckpt.read_text().splitlines()
    assert len(lines) == 2
    again = fidelity_map(SHORT, [10.0], [2.0, 3.5], 4.0, FAST, checkpoint=str(ckpt))
    assert len(ckpt.read_text().splitlines()) == 2  # nothing recomputed
    assert again.fidelity[0, 0] == fmap.fidelity[0, 0]
    with pytest.raises(ValueError):
        fidelity_map(SHORT, [], [2.0], 4.0, FAST)

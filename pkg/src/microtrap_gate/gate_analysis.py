"""Gate reconstruction, averaged fidelity, universality algebra and parameter sweeps."""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .hamiltonian import HamiltonianTable
from .physical_model import BOHR_RADIUS, DimensionlessModel, PhysicalParams, derive_dimensionless
from .propagator import propagate_columns
from .tp_basis import (
    LABELS,
    AmplitudeVector,
    TwoParticleBasis,
    computational_extraction,
    embedding_coefficients,
    enumerate_basis,
)

log = logging.getLogger(__name__)

SQRT_SWAP = np.array(
    [
        [1, 0, 0, 0],
        [0, (1 + 1j) / 2, (1 - 1j) / 2, 0],
        [0, (1 - 1j) / 2, (1 + 1j) / 2, 0],
        [0, 0, 0, 1],
    ],
    dtype=complex,
)
SWAP = np.eye(4)[[0, 2, 1, 3]].astype(complex)
CNOT = np.eye(4)[[0, 1, 3, 2]].astype(complex)  # control A (first factor), target B
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)
PAULI_Z = np.diag([1.0, -1.0]).astype(complex)


@dataclass
class GateMatrix:
    """Realised gate over (|00>, |01>, |10>, |11>); column j is the image of input j."""

    matrix: np.ndarray
    leakage: np.ndarray | None = None
    finals: list[AmplitudeVector] = field(default_factory=list, repr=False)
    norm_drift: float = 0.0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.leakage is None:
            self.leakage = 1.0 - np.sum(np.abs(self.matrix) ** 2, axis=0)

    def unitarity_error(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(4))))

    def __matmul__(self, other: "GateMatrix") -> "GateMatrix":
        return GateMatrix(self.matrix @ other.matrix)


@dataclass(frozen=True)
class GateSettings:
    n_sp: int = 8
    tol: float = 1e-9
    include_couplings: bool = True
    knots: int = 801
    samples: int = 400


_TABLES: dict[tuple, HamiltonianTable] = {}


def hamiltonian_table(
    a_lo: float, a_hi: float, n_sp: int = 8, knots: int = 801, cache_dir: str | None = None
) -> HamiltonianTable:
    """Build (or reuse) the g-independent table for ``[a_lo, a_hi]``.

    Tables are memoised per process and optionally stored as ``.npz`` files in
    ``cache_dir``.
    """
    key = (n_sp, round(a_lo, 12), round(a_hi, 12), knots)
    if key in _TABLES:
        return _TABLES[key]
    basis = enumerate_basis(n_sp)
    path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, "table_{}_{:.12g}_{:.12g}_{}.npz".format(*key))
    if path and os.path.exists(path):
        table = HamiltonianTable.load(path, basis)
    else:
        log.info("building Hamiltonian table on [%g, %g] with %d knots", a_lo, a_hi, knots)
        table = HamiltonianTable.build(basis, a_lo, a_hi, knots=knots)
        if path:
            table.save(path)
    _TABLES[key] = table
    return table


def _table_for(model: DimensionlessModel, settings: GateSettings, table):
    traj = model.trajectory
    if table is not None and table.covers(traj.a_min, traj.a_max):
        return table
    return hamiltonian_table(traj.a_min, traj.a_max, settings.n_sp, settings.knots)


def _embedding_block(basis: TwoParticleBasis) -> np.ndarray:
    return np.array([embedding_coefficients(lab, basis) for lab in LABELS])


def reconstruct_gate(
    model: DimensionlessModel,
    settings: GateSettings = GateSettings(),
    table: HamiltonianTable | None = None,
    decoupled: bool = False,
) -> GateMatrix:
    """Propagate the four computational inputs and read off the 4x4 gate.

    The trivial phase ``exp(-i (N+1) tau)`` is removed at the final time and the
    global phase is fixed so that the |00> -> |00> element is real positive.
    ``decoupled=True`` holds the traps at ``a_max`` for the same duration.
    """
    traj = model.trajectory
    if decoupled:
        table = table if table is not None and table.covers(traj.a_max, traj.a_max) else (
            hamiltonian_table(traj.a_max - 0.01, traj.a_max + 0.01, settings.n_sp, 5)
        )
    else:
        table = _table_for(model, settings, table)
    basis = table.basis
    e = _embedding_block(basis)
    result = propagate_columns(
        e.T, model, table, tol=settings.tol, include_couplings=settings.include_couplings,
        samples=settings.samples,
        hold_separation=traj.a_max if decoupled else None, duration=traj.total_time,
    )
    t_end = result.times[-1]
    phase = np.exp(1j * (basis.quanta + 1.0) * t_end)
    final = result.coefficients[-1] * phase[:, None]
    u = e.conj() @ final
    if abs(u[0, 0]) > 0:
        u = u * np.exp(-1j * np.angle(u[0, 0]))
    finals = [AmplitudeVector(final[:, j], basis, t_end) for j in range(4)]
    extractions = [computational_extraction(v) for v in finals]
    leak = np.array([x.p_double + x.p_leak for x in extractions])
    return GateMatrix(u, leak, finals, result.norm_drift)


def averaged_fidelity(u, target=SQRT_SWAP) -> float:
    """Mean over computational inputs of ``|<target e_j | U e_j>|^2``."""
    u = u.matrix if isinstance(u, GateMatrix) else np.asarray(u)
    t = target.matrix if isinstance(target, GateMatrix) else np.asarray(target)
    overlaps = np.sum(t.conj() * u, axis=0)
    return float(np.mean(np.abs(overlaps) ** 2))


def process_overlap(u, target=SQRT_SWAP) -> float:
    """Phase-sensitive diagnostic ``|Tr(target^dag U)|^2 / 16``."""
    u = u.matrix if isinstance(u, GateMatrix) else np.asarray(u)
    t = target.matrix if isinstance(target, GateMatrix) else np.asarray(target)
    return float(abs(np.trace(t.conj().T @ u)) ** 2 / 16.0)


def distance_up_to_phase(u: np.ndarray, v: np.ndarray) -> float:
    """``min_phi max|u - e^{i phi} v|`` with phi from the trace overlap."""
    overlap = np.trace(v.conj().T @ u)
    phi = np.angle(overlap) if abs(overlap) > 0 else 0.0
    return float(np.max(np.abs(u - np.exp(1j * phi) * v)))


def local_sigma() -> np.ndarray:
    """Single-qubit ``diag(1, -i) = exp(-i pi/4) exp(+i pi/4 sigma_z)``."""
    return np.exp(-1j * math.pi / 4) * np.diag(np.exp(1j * math.pi / 4 * np.diag(PAULI_Z)))


def phase_gate_composition() -> np.ndarray:
    sigma = local_sigma()
    eye = np.eye(2)
    s_a, s_b = np.kron(sigma, eye), np.kron(eye, sigma)
    return np.linalg.inv(s_a) @ s_b @ SQRT_SWAP @ s_a @ s_a @ SQRT_SWAP


def universality_suite() -> dict[str, float]:
    """Errors of the exact gate identities built from ``SQRT_SWAP``.

    Keys: ``sqrt_swap_squared`` (vs SWAP), ``sigma`` (composed sigma vs
    ``diag(1,-i)``), ``phase_gate`` (vs ``diag(1,1,1,-1)`` up to global phase),
    ``cnot`` (Hadamards on the target B around the phase gate vs CNOT with
    control A) and ``cnot_reversed`` (Hadamards on A give CNOT with control B).
    """
    eye = np.eye(2)
    phase = phase_gate_composition()
    h_a, h_b = np.kron(HADAMARD, eye), np.kron(eye, HADAMARD)
    reversed_cnot = np.eye(4)[[0, 3, 2, 1]]
    return {
        "sqrt_swap_squared": float(np.max(np.abs(SQRT_SWAP @ SQRT_SWAP - SWAP))),
        "sigma": float(np.max(np.abs(local_sigma() - np.diag([1.0, -1j])))),
        "phase_gate": distance_up_to_phase(phase, np.diag([1.0, 1.0, 1.0, -1.0])),
        "cnot": distance_up_to_phase(h_b @ phase @ h_b, CNOT),
        "cnot_reversed": distance_up_to_phase(h_a @ phase @ h_a, reversed_cnot),
    }


# ---------------------------------------------------------------- sweeps

_WORKER_TABLE: HamiltonianTable | None = None


def _init_worker(table):
    global _WORKER_TABLE
    _WORKER_TABLE = table


def _run_tasks(fn, tasks, table, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        _init_worker(table)
        for t in tasks:
            yield t, fn(t)
        return
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(table,)) as pool:
        yield from zip(tasks, pool.map(fn, tasks))


def _scattering_point(task):
    a_t, params, settings = task
    try:
        model = derive_dimensionless(replace(params, a_t=a_t))
        gate = reconstruct_gate(model, settings, _WORKER_TABLE)
        f01, f11 = gate.finals[1], gate.finals[3]
        basis = f01.basis
        i02 = basis.index((0, 2), +1)
        x01, x11 = computational_extraction(f01), computational_extraction(f11)
        return {
            "a_t_bohr": a_t / BOHR_RADIUS,
            "g": model.g,
            "status": "ok",
            "p01_01": abs(x01.amplitudes[1]) ** 2,
            "p01_10": abs(x01.amplitudes[2]) ** 2,
            "p01_double": x01.p_double,
            "p01_other": x01.p_leak,
            "p11_11": abs(x11.amplitudes[3]) ** 2,
            "p11_02": abs(f11.coefficients[i02]) ** 2,
            "p11_double": x11.p_double,
            "fidelity": averaged_fidelity(gate),
        }
    except Exception as exc:  # recorded per point, the sweep continues
        return {"a_t_bohr": a_t / BOHR_RADIUS, "status": f"error: {exc}"}


def sweep_scattering(
    params: PhysicalParams,
    a_t_values,
    settings: GateSettings = GateSettings(),
    workers: int = 1,
) -> list[dict]:
    """Final populations from |01> and |11>+ as a function of the scattering length (m)."""
    a_t_values = list(a_t_values)
    if not a_t_values:
        raise ValueError("a_t list is empty")
    traj = params.trajectory
    table = hamiltonian_table(traj.a_min, traj.a_max, settings.n_sp, settings.knots)
    tasks = [(float(a), params, settings) for a in a_t_values]
    return [row for _, row in _run_tasks(_scattering_point, tasks, table, workers)]


@dataclass
class FidelityMap:
    t_r: np.ndarray
    a_min: np.ndarray
    t_i: float
    fidelity: np.ndarray  # rows t_r, columns a_min; NaN where a point failed
    leakage: np.ndarray

    def best(self) -> dict:
        if np.all(np.isnan(self.fidelity)):
            return {"fidelity": float("nan")}
        i, j = np.unravel_index(np.nanargmax(self.fidelity), self.fidelity.shape)
        return {"t_r": float(self.t_r[i]), "a_min": float(self.a_min[j]),
                "fidelity": float(self.fidelity[i, j])}


def _map_point(task):
    (i, j), params, settings = task
    try:
        model = derive_dimensionless(params)
        gate = reconstruct_gate(model, settings, _WORKER_TABLE)
        return {"i": i, "j": j, "F": averaged_fidelity(gate), "leak": float(np.max(gate.leakage))}
    except Exception as exc:
        log.warning("map point (%d, %d) failed: %s", i, j, exc)
        return {"i": i, "j": j, "F": float("nan"), "leak": float("nan"), "error": str(exc)}


def fidelity_map(
    params: PhysicalParams,
    t_r_values,
    a_min_values,
    t_i: float,
    settings: GateSettings = GateSettings(),
    workers: int = 1,
    checkpoint: str | None = None,
) -> FidelityMap:
    """Averaged fidelity on a (t_r, a_min) grid at fixed ``t_i``.

    With ``checkpoint`` set, each finished point is appended as a JSON line and
    points already present are skipped on a rerun.
    """
    t_r_values, a_min_values = np.asarray(t_r_values, float), np.asarray(a_min_values, float)
    if t_r_values.size == 0 or a_min_values.size == 0:
        raise ValueError("t_r and a_min lists must be nonempty")
    fid = np.full((t_r_values.size, a_min_values.size), np.nan)
    leak = np.full_like(fid, np.nan)
    done = set()
    if checkpoint and os.path.exists(checkpoint):
        with open(checkpoint) as fh:
            for line in fh:
                rec = json.loads(line)
                fid[rec["i"], rec["j"]], leak[rec["i"], rec["j"]] = rec["F"], rec["leak"]
                done.add((rec["i"], rec["j"]))
    tasks = [
        ((i, j), replace(params, t_r=float(tr), a_min=float(am), t_i=float(t_i)), settings)
        for i, tr in enumerate(t_r_values)
        for j, am in enumerate(a_min_values)
        if (i, j) not in done
    ]
    a_lo = float(np.min(a_min_values))
    table = hamiltonian_table(a_lo, params.a_max, settings.n_sp, settings.knots)
    sink = open(checkpoint, "a") if checkpoint else None
    try:
        for _, rec in _run_tasks(_map_point, tasks, table, workers):
            fid[rec["i"], rec["j"]], leak[rec["i"], rec["j"]] = rec["F"], rec["leak"]
            if sink:
                sink.write(json.dumps(rec) + "\n")
                sink.flush()
    finally:
        if sink:
            sink.close()
    return FidelityMap(t_r_values, a_min_values, float(t_i), fid, leak)

"""Time evolution of the expansion coefficients along the trap trajectory.

The coefficients obey ``i dc/dtau = [H(a) - i * adot * A(a)] c`` with ``H``
and ``A`` interpolated from a :class:`HamiltonianTable`. Integration uses an
adaptive Dormand-Prince 5(4) pair; the norm is never renormalised so that its
drift stays available as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .hamiltonian import HamiltonianTable
from .physical_model import DimensionlessModel, DomainError, TrapTrajectory
from .tp_basis import LABELS, AmplitudeVector, TwoParticleBasis, embedding_coefficients

MIN_SAMPLES = 400


class IntegrationError(RuntimeError):
    """The adaptive integrator failed (typically step-size underflow)."""


@dataclass
class PropagationResult:
    """Sampled evolution of one or more initial states.

    ``coefficients`` has shape (samples, dimension, columns); a single-state
    run has one column.
    """

    times: np.ndarray
    coefficients: np.ndarray
    basis: TwoParticleBasis
    norm_drift: float
    stats: dict = field(default_factory=dict)

    @property
    def columns(self) -> int:
        return self.coefficients.shape[2]

    def state(self, k: int, column: int = 0) -> AmplitudeVector:
        return AmplitudeVector(self.coefficients[k, :, column], self.basis, float(self.times[k]))

    def states(self, column: int = 0) -> list[AmplitudeVector]:
        return [self.state(k, column) for k in range(len(self.times))]

    def final(self, column: int = 0) -> AmplitudeVector:
        return self.state(len(self.times) - 1, column)


def _check_coverage(table: HamiltonianTable, traj: TrapTrajectory) -> None:
    if not table.covers(traj.a_min, traj.a_max):
        raise DomainError(
            f"table [{table.a_lo}, {table.a_hi}] does not cover "
            f"trajectory [{traj.a_min}, {traj.a_max}]"
        )


def propagate_columns(
    initial: np.ndarray,
    model: DimensionlessModel,
    table: HamiltonianTable,
    tol: float = 1e-9,
    include_couplings: bool = True,
    samples: int = MIN_SAMPLES,
    atol: float | None = None,
    duration: float | None = None,
    hold_separation: float | None = None,
) -> PropagationResult:
    """Propagate the columns of ``initial`` (dimension x k) together.

    ``hold_separation`` freezes the traps at that separation for ``duration``
    instead of following the trajectory (decoupled-limit checks).
    """
    traj = model.trajectory
    initial = np.asarray(initial, dtype=complex)
    if initial.ndim == 1:
        initial = initial[:, None]
    dim, ncol = initial.shape
    if dim != table.basis.dimension:
        raise ValueError(f"initial state has dimension {dim}, table {table.basis.dimension}")
    samples = max(int(samples), MIN_SAMPLES)

    if hold_separation is None:
        _check_coverage(table, traj)
        t_end = traj.total_time

        def schedule(t):
            return traj.separation(t), traj.velocity(t)
    else:
        if not table.covers(hold_separation, hold_separation):
            raise DomainError(f"table does not cover separation {hold_separation}")
        t_end = float(duration if duration is not None else traj.total_time)
        fixed = (float(hold_separation), 0.0)

        def schedule(t):
            return fixed

    g = model.g
    evaluations = 0
    # integrate d = exp(+i E tau) c, which removes the fast asymptotic phases
    energy = table.basis.quanta + 1.0
    shift = np.diag(energy)

    def rhs(t, y):
        nonlocal evaluations
        evaluations += 1
        a, a_dot = schedule(t)
        m = table.generator(a, a_dot, g, include_couplings) - shift
        rot = np.exp(1j * energy * t)[:, None]
        d = y.reshape(dim, ncol)
        return (-1j * rot * (m @ (d / rot))).ravel()

    times = np.linspace(0.0, t_end, samples)
    sol = solve_ivp(
        rhs, (0.0, t_end), initial.ravel(), method="RK45", t_eval=times,
        rtol=tol, atol=atol if atol is not None else tol * 1e-3,
    )
    if sol.status != 0:
        raise IntegrationError(f"integration failed at tau={sol.t[-1]:.6g}: {sol.message}")
    rotated = sol.y.T.reshape(samples, dim, ncol)
    coeffs = rotated * np.exp(-1j * np.outer(times, energy))[:, :, None]
    norms = np.linalg.norm(coeffs, axis=1)
    drift = float(np.max(np.abs(norms - np.linalg.norm(initial, axis=0))))
    stats = {"nfev": int(sol.nfev), "rhs_calls": evaluations, "tol": tol}
    return PropagationResult(times, coeffs, table.basis, drift, stats)


def propagate(
    initial: AmplitudeVector,
    model: DimensionlessModel,
    table: HamiltonianTable,
    tol: float = 1e-9,
    include_couplings: bool = True,
    samples: int = MIN_SAMPLES,
    **kwargs,
) -> PropagationResult:
    """Propagate one state through the full trajectory of ``model``."""
    if initial.basis is not table.basis and initial.basis.n_sp != table.basis.n_sp:
        raise ValueError("initial state and table use different bases")
    if abs(initial.norm - 1.0) > 1e-8:
        raise ValueError(f"initial state not normalised (norm {initial.norm:.12g})")
    return propagate_columns(
        initial.coefficients, model, table, tol, include_couplings, samples, **kwargs
    )


def remove_trivial_phase(v: AmplitudeVector, tau: float) -> AmplitudeVector:
    """Multiply each coefficient by ``exp(+i (N + 1) tau)``, N its total quanta."""
    phase = np.exp(1j * (v.basis.quanta + 1.0) * tau)
    return AmplitudeVector(v.coefficients * phase, v.basis, v.time)


def _group_indices(basis: TwoParticleBasis) -> dict[str, np.ndarray]:
    idx = np.arange(basis.dimension)
    single = ~basis.double_mask
    groups = {
        "02+": np.array([basis.index((0, 2), +1)]) if basis.levels > 2 else np.array([], int),
        "01~+": np.array([basis.index((0, 1), +1, "double")]),
        "01~-": np.array([basis.index((0, 1), -1, "double")]),
    }
    groups["double"] = idx[basis.double_mask]
    groups["single"] = idx[single]
    return groups


POPULATION_COLUMNS = ("00", "01", "10", "11", "02+", "double", "other")


def population_row(v: AmplitudeVector) -> dict[str, float]:
    """Labelled populations of one state; the values sum to the squared norm."""
    basis = v.basis
    c = v.coefficients
    pops = np.abs(c) ** 2
    groups = _group_indices(basis)
    row = {}
    for lab in LABELS:
        row[lab] = float(np.abs(np.vdot(embedding_coefficients(lab, basis), c)) ** 2)
    row["02+"] = float(pops[groups["02+"]].sum())
    row["double"] = float(pops[groups["double"]].sum())
    row["01~+"] = float(pops[groups["01~+"]].sum())
    accounted = sum(row[k] for k in ("00", "01", "10", "11", "02+", "double"))
    row["other"] = float(pops.sum()) - accounted
    return row


def population_trace(result: PropagationResult, column: int = 0) -> list[dict[str, float]]:
    """Per-sample labelled populations (plus ``time``) in the trivial-phase-free frame.

    Populations are phase independent; the frame only matters for amplitudes.
    Columns ``00``..``11`` are the computational states, ``02+`` the |02>+
    state, ``double`` all doubly occupied states, ``other`` the rest. They sum
    to the norm squared. ``01~+`` is an extra diagnostic included in
    ``double``.
    """
    rows = []
    for k, t in enumerate(result.times):
        row = {"time": float(t)}
        row.update(population_row(result.state(k, column)))
        rows.append(row)
    return rows


def phase_free_final(result: PropagationResult, column: int = 0) -> AmplitudeVector:
    v = result.final(column)
    return remove_trivial_phase(v, v.time)


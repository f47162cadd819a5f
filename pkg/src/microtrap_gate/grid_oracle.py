"""Split-operator propagation of the full two-particle wavefunction on a 2D grid.

An independent check of the basis-expansion propagator: ``psi(x1, x2)`` lives
on a periodic ``N_g x N_g`` grid over ``[-L_g, L_g)`` and is advanced with the
Strang splitting ``exp(-iV dt/2) F^-1 exp(-iK dt) F exp(-iV dt/2)``. The
contact interaction is regularised as a normalised Gaussian of width
``sigma`` in ``x1 - x2``.

Arrays may carry leading batch axes; every operation acts on the last two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import CubicSpline

from .physical_model import DimensionlessModel, TrapTrajectory, potential
from .sp_basis import QuadratureGrid, SingleParticleBasis, build_orthonormal_basis
from .tp_basis import (
    LABELS,
    AmplitudeVector,
    TwoParticleBasis,
    embedding_coefficients,
    enumerate_basis,
)

try:  # planned FFTW transforms are about 1.5x faster than pocketfft here
    import pyfftw
except ImportError:  # pragma: no cover - exercised only without the optional extra
    pyfftw = None

NORM_LOSS_LIMIT = 1e-4


class GridStabilityError(RuntimeError):
    """Norm drifted by more than the allowed amount during split stepping."""


@dataclass(frozen=True)
class Grid2D:
    half_width: float
    points: int = 256

    def __post_init__(self):
        if self.points < 16 or self.points % 2:
            raise ValueError(f"need an even number of points >= 16, got {self.points}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @classmethod
    def for_separation(cls, a_max: float, points: int = 256) -> "Grid2D":
        return cls(a_max + 6.0, points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.points)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.points, self.spacing)

    def refined(self) -> "Grid2D":
        return Grid2D(self.half_width, 2 * self.points)


@dataclass
class GridWavefunction:
    psi: np.ndarray
    grid: Grid2D
    time: float = 0.0

    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.psi) ** 2, axis=(-2, -1)) * self.grid.spacing**2)

    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def exchange_asymmetry(self) -> float:
        return float(np.max(np.abs(self.psi - np.swapaxes(self.psi, -2, -1))))


def sample_modes(sp: SingleParticleBasis, x: np.ndarray) -> np.ndarray:
    """Single-particle modes interpolated from their quadrature grid onto ``x``."""
    spline = CubicSpline(sp.grid.x, sp.functions, axis=1)
    inside = np.abs(x) <= sp.grid.half_width
    out = np.zeros((sp.n_sp, x.size))
    out[:, inside] = spline(x[inside])
    return out


def amplitudes_to_grid(coefficients: np.ndarray, basis: TwoParticleBasis, modes: np.ndarray):
    """``psi(x1, x2) = sum_mn T[m, n] f_m(x1) f_n(x2)`` for one or more coefficient vectors."""
    t = np.tensordot(np.asarray(coefficients), basis.tensors, axes=([-1], [0]))
    return np.einsum("...mn,mi,nj->...ij", t, modes, modes, optimize=True)


def init_grid_state(
    label: str | list[str], sp: SingleParticleBasis, grid: Grid2D, basis: TwoParticleBasis
) -> GridWavefunction:
    """Embedded computational state(s) sampled on the grid and normalised."""
    if grid.half_width < sp.a + 5.0:
        raise ValueError(f"grid half-width {grid.half_width} too small for a={sp.a}")
    labels = [label] if isinstance(label, str) else list(label)
    coeffs = np.array([embedding_coefficients(lab, basis) for lab in labels])
    psi = amplitudes_to_grid(coeffs, basis, sample_modes(sp, grid.x))
    psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2, axis=(-2, -1)) * grid.spacing**2)[:, None, None]
    if isinstance(label, str):
        psi = psi[0]
    return GridWavefunction(psi, grid, 0.0)


def contact_kernel(grid: Grid2D, sigma: float | None = None) -> np.ndarray:
    """Normalised Gaussian ``exp(-r^2 / 2 sigma^2) / (sqrt(2 pi) sigma)`` with ``r = x1 - x2``.

    ``sigma=None`` selects ``2 h``; ``sigma=0`` gives the point contact
    ``delta_ij / h`` on the grid diagonal.
    """
    sigma = 2.0 * grid.spacing if sigma is None else float(sigma)
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        return np.eye(grid.points) / grid.spacing
    x = grid.x
    r = x[:, None] - x[None, :]
    return np.exp(-0.5 * (r / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)


class _KineticPropagator:
    """Applies ``F^-1 exp(-iK dt) F`` in place over the last two axes."""

    def __init__(self, shape, kinetic: np.ndarray, workers: int = 1):
        self.kinetic = kinetic
        self.workers = workers
        self.fftw = None
        if pyfftw is not None:
            self.buf = pyfftw.empty_aligned(shape, dtype="complex128")
            self.spec = pyfftw.empty_aligned(shape, dtype="complex128")
            flags = ("FFTW_MEASURE",)
            self.fftw = (
                pyfftw.FFTW(self.buf, self.spec, axes=(-2, -1), flags=flags, threads=workers),
                pyfftw.FFTW(self.spec, self.buf, axes=(-2, -1), direction="FFTW_BACKWARD",
                            flags=flags, threads=workers),
            )

    def __call__(self, state: np.ndarray) -> np.ndarray:
        if self.fftw is None:
            spec = sfft.fft2(state, workers=self.workers)
            spec *= self.kinetic
            return sfft.ifft2(spec, workers=self.workers, overwrite_x=True)
        forward, backward = self.fftw
        self.buf[...] = state
        forward()
        self.spec *= self.kinetic
        backward()  # pyfftw normalises the inverse by default
        return self.buf


@dataclass
class Snapshot:
    time: float
    density: np.ndarray = field(repr=False)


def split_step_evolve(
    psi: GridWavefunction,
    model: DimensionlessModel,
    traj: TrapTrajectory | None = None,
    dt: float = 2e-3,
    snapshot_times=(),
    sigma: float | None = None,
    t_end: float | None = None,
    hold_separation: float | None = None,
    workers: int = 1,
) -> tuple[GridWavefunction, list[Snapshot]]:
    """Advance ``psi`` from its time to ``t_end`` (default: end of the trajectory).

    The step is shrunk slightly so that an integer number of steps lands on
    ``t_end``; snapshots are taken at the nearest step boundary.
    """
    if not 0 < dt <= 5e-3:
        raise ValueError(f"dt must lie in (0, 5e-3], got {dt}")
    traj = traj or model.trajectory
    grid = psi.grid
    t0 = psi.time
    t_end = traj.total_time if t_end is None else float(t_end)
    steps = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
    h = (t_end - t0) / steps
    x = grid.x
    k = grid.k
    kinetic = np.exp(-0.5j * h * (k[:, None] ** 2 + k[None, :] ** 2))
    contact_half = np.exp(-0.5j * h * model.g * contact_kernel(grid, sigma))

    def separation(t):
        return hold_separation if hold_separation is not None else traj.separation(min(t, traj.total_time))

    def half_potential(t):
        p = np.exp(-0.5j * h * potential(x, separation(t)))
        return (p[:, None] * p[None, :]) * contact_half

    wanted = sorted(float(s) for s in snapshot_times)
    marks = {int(round((s - t0) / h)): s for s in wanted if t0 <= s <= t_end + 1e-12}
    snapshots = []
    norm0 = psi.norm()
    state = np.array(psi.psi, dtype=complex)
    step_kinetic = _KineticPropagator(state.shape, kinetic, workers)
    if 0 in marks:
        snapshots.append(Snapshot(t0, np.abs(state) ** 2))
    state *= half_potential(t0)
    for n in range(1, steps + 1):
        state = step_kinetic(state)
        t = t0 + n * h
        phase = half_potential(t)
        if n in marks or n == steps:
            state *= phase
            if n in marks:
                snapshots.append(Snapshot(t, np.abs(state) ** 2))
            if n < steps:
                state *= phase
        else:
            # the two half steps at equal time merge into one full potential step
            state *= phase * phase
        if n % 2000 == 0 or n == steps:
            drift = np.max(np.abs(GridWavefunction(state, grid).norm() - norm0))
            if drift > NORM_LOSS_LIMIT:
                raise GridStabilityError(f"norm drift {drift:.3g} at tau={t:.4g}")
    state = np.array(state)
    return GridWavefunction(state, grid, t_end), snapshots


def project_onto_basis(
    psi: GridWavefunction,
    basis: TwoParticleBasis,
    sp: SingleParticleBasis | None = None,
    a: float | None = None,
):
    """Overlaps with every two-particle basis state and the residual weight.

    Returns ``(AmplitudeVector, residual)`` for a single state, or arrays of
    coefficients (batch, dimension) and residuals for a batch.
    """
    if sp is None:
        if a is None:
            raise ValueError("need sp or a")
        sp = build_orthonormal_basis(basis.n_sp, a, QuadratureGrid.for_separation(a))
    grid = psi.grid
    f = sample_modes(sp, grid.x)
    overlap = np.einsum("mi,...ij,nj->...mn", f, psi.psi, f, optimize=True) * grid.spacing**2
    coeffs = np.tensordot(overlap, basis.tensors, axes=([-2, -1], [1, 2]))
    weight = np.sum(np.abs(psi.psi) ** 2, axis=(-2, -1)) * grid.spacing**2
    residual = weight - np.sum(np.abs(coeffs) ** 2, axis=-1)
    if coeffs.ndim == 1:
        return AmplitudeVector(coeffs, basis, psi.time), float(residual)
    return coeffs, residual


def write_frame(path, density: np.ndarray, grid: Grid2D) -> None:
    """Binary frame: 16-byte header (b"MTG1", int32 N_g, float64 L_g) then float64 data."""
    n = grid.points
    with open(path, "wb") as fh:
        fh.write(b"MTG1")
        fh.write(np.asarray(n, "<i4").tobytes())
        fh.write(np.asarray(grid.half_width, "<f8").tobytes())
        fh.write(np.ascontiguousarray(density, dtype="<f8").tobytes())


def read_frame(path) -> tuple[np.ndarray, Grid2D]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != b"MTG1":
        raise ValueError(f"{path}: not a grid frame")
    n = int(np.frombuffer(raw[4:8], "<i4")[0])
    half = float(np.frombuffer(raw[8:16], "<f8")[0])
    data = np.frombuffer(raw[16:], "<f8").reshape(n, n)
    return data.copy(), Grid2D(half, n)


@dataclass
class OracleRun:
    """Final state of a grid run projected back onto the two-particle basis."""

    labels: list[str]
    populations: list[dict[str, float]]
    residual: np.ndarray
    grid: Grid2D
    dt: float
    snapshots: list[Snapshot] = field(default_factory=list, repr=False)


def oracle_run(
    model: DimensionlessModel,
    labels=LABELS,
    grid: Grid2D | None = None,
    dt: float = 2e-3,
    n_sp: int = 8,
    sigma: float | None = None,
    snapshot_times=(),
    workers: int = 1,
) -> OracleRun:
    """Evolve embedded inputs over the full trajectory and project at ``a_max``."""
    from .propagator import population_row

    traj = model.trajectory
    grid = grid or Grid2D.for_separation(traj.a_max)
    basis = enumerate_basis(n_sp)
    sp = build_orthonormal_basis(n_sp, traj.a_max, QuadratureGrid.for_separation(traj.a_max))
    labels = list(labels)
    psi = init_grid_state(labels, sp, grid, basis)
    final, snaps = split_step_evolve(
        psi, model, dt=dt, sigma=sigma, snapshot_times=snapshot_times, workers=workers
    )
    coeffs, residual = project_onto_basis(final, basis, sp)
    pops = [population_row(AmplitudeVector(c, basis, final.time)) for c in coeffs]
    return OracleRun(labels, pops, np.asarray(residual), grid, dt, snaps)

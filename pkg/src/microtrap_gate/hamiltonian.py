"""Two-particle Hamiltonian and derivative couplings in the moving basis.

For a half-separation ``a`` the Hamiltonian splits as ``H = H0 + g * Hint``:
``H0`` lifts the one-body operator ``-1/2 d^2/dx^2 + potential(x, a)`` to the
symmetrised pairs and ``Hint`` is the contact interaction ``delta(x1 - x2)``.
``A[i, j] = <i|d/da j>`` collects the derivative couplings generated by the
``a``-dependence of the basis itself.

Matrices are tabulated on a grid of separations and interpolated with cubic
splines during propagation (:class:`HamiltonianTable`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .physical_model import DomainError, potential
from .sp_basis import (
    DEGENERACY_FLOOR,
    DegenerateSeparationError,
    QuadratureGrid,
    SingleParticleBasis,
    build_orthonormal_basis,
)
from .tp_basis import TwoParticleBasis

DEFAULT_DELTA_A = 1e-5


@dataclass(frozen=True)
class HamiltonianAtSeparation:
    a: float
    h0: np.ndarray
    h_int: np.ndarray
    coupling: np.ndarray

    def hamiltonian(self, g: float) -> np.ndarray:
        return self.h0 + g * self.h_int


def one_body_matrix(sp: SingleParticleBasis) -> np.ndarray:
    """``<m| -1/2 d^2/dx^2 + potential(x, a) |n>`` over the single-particle modes.

    The kinetic part uses ``1/2 <m'|n'>`` with exact derivatives; the Simpson
    rule keeps the kink of the potential at x=0 on a panel boundary.
    """
    grid = sp.grid
    w = grid.weights
    f, d = sp.functions, sp.derivatives
    kinetic = 0.5 * (d * w) @ d.T
    trap = (f * (w * potential(grid.x, sp.a))) @ f.T
    h = kinetic + trap
    return 0.5 * (h + h.T)


def contact_matrix(sp: SingleParticleBasis) -> np.ndarray:
    """``<mn|delta(x1 - x2)|pq> = int f_m f_n f_p f_q dx`` on the product space."""
    f = sp.functions
    n = f.shape[0]
    pairs = (f[:, None, :] * f[None, :, :]).reshape(n * n, -1)
    w = (pairs * sp.grid.weights) @ pairs.T
    return 0.5 * (w + w.T)


def _lift_one_body(op: np.ndarray, basis: TwoParticleBasis) -> np.ndarray:
    eye = np.eye(op.shape[0])
    b = basis.embedding_matrix
    return b.T @ (np.kron(op, eye) + np.kron(eye, op)) @ b


def _check(basis: TwoParticleBasis, sp: SingleParticleBasis, a: float | None) -> None:
    if sp.n_sp != basis.n_sp:
        raise ValueError(f"basis order mismatch: {sp.n_sp} single-particle vs {basis.n_sp}")
    if a is not None and abs(sp.a - a) > 1e-12:
        raise ValueError(f"single-particle basis built at a={sp.a}, requested a={a}")


def interaction_matrix(basis: TwoParticleBasis, sp: SingleParticleBasis) -> np.ndarray:
    """Contact interaction with unit coupling in the two-particle basis."""
    _check(basis, sp, None)
    b = basis.embedding_matrix
    return b.T @ contact_matrix(sp) @ b


def assemble_h(
    a: float,
    basis: TwoParticleBasis,
    sp: SingleParticleBasis,
    g: float,
    grid: QuadratureGrid | None = None,
) -> np.ndarray:
    """Two-particle Hamiltonian at separation ``a`` (real symmetric)."""
    _check(basis, sp, a)
    if grid is not None and grid != sp.grid:
        raise ValueError("single-particle basis sampled on a different grid")
    h = _lift_one_body(one_body_matrix(sp), basis)
    if g != 0.0:
        h = h + g * interaction_matrix(basis, sp)
    return 0.5 * (h + h.T)


def single_particle_coupling(
    a: float,
    n_sp: int,
    grid: QuadratureGrid,
    delta_a: float = DEFAULT_DELTA_A,
    centre_basis: SingleParticleBasis | None = None,
) -> np.ndarray:
    """``<m(a)|d/da n(a)>`` by central differences, antisymmetrised."""
    if a - delta_a <= DEGENERACY_FLOOR:
        raise DegenerateSeparationError(
            f"a - delta_a = {a - delta_a} crosses the degeneracy floor {DEGENERACY_FLOOR}"
        )
    if centre_basis is None:
        centre_basis = build_orthonormal_basis(n_sp, a, grid)
    centre = centre_basis.functions
    up = build_orthonormal_basis(n_sp, a + delta_a, grid).functions
    down = build_orthonormal_basis(n_sp, a - delta_a, grid).functions
    deriv = (up - down) / (2.0 * delta_a)
    c = (centre * grid.weights) @ deriv.T
    return 0.5 * (c - c.T)


def assemble_coupling(
    a: float,
    basis: TwoParticleBasis,
    grid: QuadratureGrid,
    delta_a: float = DEFAULT_DELTA_A,
    centre_basis: SingleParticleBasis | None = None,
) -> np.ndarray:
    """Two-particle derivative couplings ``<i|d/da j>`` (real antisymmetric)."""
    sp_coupling = single_particle_coupling(a, basis.n_sp, grid, delta_a, centre_basis)
    c = _lift_one_body(sp_coupling, basis)
    return 0.5 * (c - c.T)


def assemble_at(
    a: float, basis: TwoParticleBasis, grid: QuadratureGrid, delta_a: float = DEFAULT_DELTA_A
) -> HamiltonianAtSeparation:
    sp = build_orthonormal_basis(basis.n_sp, a, grid)
    return HamiltonianAtSeparation(
        a=float(a),
        h0=assemble_h(a, basis, sp, 0.0),
        h_int=interaction_matrix(basis, sp),
        coupling=assemble_coupling(a, basis, grid, delta_a, centre_basis=sp),
    )


@dataclass(eq=False)
class HamiltonianTable:
    """Cubic-spline tables of ``H0``, ``Hint`` and ``A`` over ``[a_lo, a_hi]``.

    Independent of the coupling ``g``, so one table serves a whole scattering
    sweep. Evaluation uses the spline's piecewise polynomial coefficients
    directly, which keeps the cost per call at a few small array operations.
    """

    basis: TwoParticleBasis
    knots: np.ndarray
    h0: np.ndarray
    h_int: np.ndarray
    coupling: np.ndarray
    _coef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        stacked = np.stack([self.h0, self.h_int, self.coupling], axis=1)
        spline = CubicSpline(self.knots, stacked, axis=0)
        # spline.c has shape (4, n_knots - 1, 3, D, D), highest power first
        self._coef = np.ascontiguousarray(np.moveaxis(spline.c, 0, 1))

    @property
    def a_lo(self) -> float:
        return float(self.knots[0])

    @property
    def a_hi(self) -> float:
        return float(self.knots[-1])

    def covers(self, a_lo: float, a_hi: float) -> bool:
        eps = 1e-9
        return self.a_lo <= a_lo + eps and a_hi - eps <= self.a_hi

    def _raw(self, a: float) -> np.ndarray:
        if not (self.a_lo - 1e-9 <= a <= self.a_hi + 1e-9):
            raise DomainError(f"separation {a} outside table [{self.a_lo}, {self.a_hi}]")
        k = int(np.searchsorted(self.knots, a, side="right")) - 1
        k = min(max(k, 0), len(self.knots) - 2)
        t = a - self.knots[k]
        c = self._coef[k]
        return ((c[0] * t + c[1]) * t + c[2]) * t + c[3]

    def evaluate(self, a: float) -> HamiltonianAtSeparation:
        h0, h_int, coupling = self._raw(a)
        return HamiltonianAtSeparation(a=float(a), h0=h0, h_int=h_int, coupling=coupling)

    def generator(self, a: float, a_dot: float, g: float, include_couplings: bool = True):
        """``H(a) - i * a_dot * A(a)``, the right-hand side matrix of ``i dc/dt``."""
        h0, h_int, coupling = self._raw(a)
        m = h0 + g * h_int
        if include_couplings and a_dot != 0.0:
            return m - 1j * a_dot * coupling
        return m.astype(complex)

    @classmethod
    def build(
        cls,
        basis: TwoParticleBasis,
        a_lo: float,
        a_hi: float,
        knots: int = 801,
        grid: QuadratureGrid | None = None,
        delta_a: float = DEFAULT_DELTA_A,
    ) -> "HamiltonianTable":
        if not a_hi >= a_lo:
            raise ValueError(f"need a_hi >= a_lo, got [{a_lo}, {a_hi}]")
        if a_hi == a_lo:
            a_hi = a_lo + 1e-3
        grid = grid or QuadratureGrid.for_separation(a_hi + delta_a)
        xs = np.linspace(a_lo, a_hi, knots)
        entries = [assemble_at(a, basis, grid, delta_a) for a in xs]
        return cls(
            basis=basis,
            knots=xs,
            h0=np.array([e.h0 for e in entries]),
            h_int=np.array([e.h_int for e in entries]),
            coupling=np.array([e.coupling for e in entries]),
        )

    def save(self, path) -> None:
        np.savez_compressed(
            path, knots=self.knots, h0=self.h0, h_int=self.h_int, coupling=self.coupling,
            n_sp=self.basis.n_sp,
        )

    @classmethod
    def load(cls, path, basis: TwoParticleBasis) -> "HamiltonianTable":
        data = np.load(path)
        if int(data["n_sp"]) != basis.n_sp:
            raise ValueError("table was built for a different basis order")
        return cls(basis, data["knots"], data["h0"], data["h_int"], data["coupling"])

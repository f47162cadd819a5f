"""Orthonormal single-particle basis for two displaced harmonic traps.

Bare oscillator states of the left (centre -a) and right (centre +a) traps are
combined into parity-definite states ``|i>^± = (|i>_L ± (-1)^i |i>_R)/sqrt(2)``,
orthonormalised by Gram-Schmidt inside each parity set and recombined into
trap-localised states ``|i>_L = (phi_i^+ + phi_i^-)/sqrt(2)`` and
``|i>_R = (-1)^i (phi_i^+ - phi_i^-)/sqrt(2)``.

Exact x-derivatives of the bare Hermite functions are carried through the same
linear operations, so kinetic matrix elements need no numerical differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import eval_hermite

from .physical_model import InvalidParameterError

MAX_LEVEL = 5
DEGENERACY_FLOOR = 0.05
GRAM_TOLERANCE = 1e-8


class DegenerateSeparationError(ValueError):
    """Separation too small: the left/right states become linearly dependent."""


class ResolutionError(RuntimeError):
    """Quadrature grid cannot represent the basis to the required accuracy."""


def simpson_weights(m: int, h: float) -> np.ndarray:
    """Composite Simpson weights for an odd number of equally spaced nodes."""
    if m < 3 or m % 2 == 0:
        raise InvalidParameterError(f"Simpson rule needs an odd node count >= 3, got {m}")
    w = np.full(m, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


@dataclass(frozen=True)
class QuadratureGrid:
    """Symmetric grid on [-L, L] with an odd number of nodes, so x=0 is a node.

    Quadrature uses Simpson weights; x=0 is a panel boundary, which keeps the
    rule high order across the kink of the double-well potential.
    """

    half_width: float
    points: int = 4097

    def __post_init__(self):
        if self.points % 2 == 0:
            raise InvalidParameterError(f"grid needs an odd number of points, got {self.points}")
        if (self.points // 2) % 2:
            raise InvalidParameterError(
                "grid point count must be 1 mod 4 so x=0 is a Simpson panel boundary"
            )
        if self.spacing > 0.02:
            raise InvalidParameterError(f"grid spacing {self.spacing:.4g} exceeds 0.02")

    @classmethod
    def for_separation(cls, a_max: float, points: int = 4097) -> "QuadratureGrid":
        return cls(half_width=a_max + 8.0, points=points)

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points)

    @cached_property
    def weights(self) -> np.ndarray:
        return simpson_weights(self.points, self.spacing)

    def inner(self, f, g):
        """Quadrature inner products of real sampled functions along the last axis."""
        return (f * self.weights) @ np.swapaxes(g, -1, -2) if np.ndim(g) > 1 else (f * self.weights) @ g

    def check_covers(self, a: float) -> None:
        if self.half_width < a + 8.0 - 1e-3:
            raise InvalidParameterError(
                f"grid half-width {self.half_width} too small for separation {a} (need a + 8)"
            )


def hermite_function(n: int, y: np.ndarray) -> np.ndarray:
    """Normalised oscillator eigenfunction of level n (unit frequency and mass)."""
    norm = 1.0 / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))
    return norm * eval_hermite(n, y) * np.exp(-0.5 * y * y)


def hermite_function_derivative(n: int, y: np.ndarray) -> np.ndarray:
    """d/dy of :func:`hermite_function` via the ladder relation."""
    d = -math.sqrt((n + 1) / 2.0) * hermite_function(n + 1, y)
    if n > 0:
        d += math.sqrt(n / 2.0) * hermite_function(n - 1, y)
    return d


def _centre(side: str, a: float) -> float:
    if side == "L":
        return -a
    if side == "R":
        return a
    raise ValueError(f"side must be 'L' or 'R', got {side!r}")


def displaced_ho_state(i: int, side: str, a: float, grid: QuadratureGrid) -> np.ndarray:
    """Oscillator level ``i`` centred at -a (left) or +a (right), sampled on ``grid``."""
    if i < 0 or i > MAX_LEVEL:
        raise InvalidParameterError(f"level {i} not supported (0..{MAX_LEVEL})")
    return hermite_function(i, grid.x - _centre(side, a))


def xi_coefficients(a: float) -> tuple[float, float, float, float]:
    """Closed-form normalisers ``(xi0+, xi0-, xi1+, xi1-)`` of the first parity states."""
    if a <= DEGENERACY_FLOOR:
        raise DegenerateSeparationError(
            f"separation {a} at or below degeneracy floor {DEGENERACY_FLOOR}"
        )
    s = a * a
    q = math.exp(-s)
    xi0p = 1.0 / math.sqrt(1.0 + q)
    xi0m = 1.0 / math.sqrt(-math.expm1(-s))
    # e^{s}/sqrt((e^s ± 1)(e^s - e^-s ± 2s)), rewritten in e^{-s} to avoid overflow
    xi1p = 1.0 / math.sqrt((1.0 + q) * (1.0 - q * q + 2.0 * s * q))
    xi1m = 1.0 / math.sqrt(-math.expm1(-s) * (1.0 - q * q - 2.0 * s * q))
    return xi0p, xi0m, xi1p, xi1m


def closed_form_parity_states(a: float, x: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic ``phi_0^±`` and ``phi_1^±`` for the lowest two levels.

    Used as an independent check of the numerical Gram-Schmidt.
    """
    xi0p, xi0m, xi1p, xi1m = xi_coefficients(a)
    l0, r0 = hermite_function(0, x + a), hermite_function(0, x - a)
    l1, r1 = hermite_function(1, x + a), hermite_function(1, x - a)
    zero = {+1: (l0 + r0) / math.sqrt(2.0), -1: (l0 - r0) / math.sqrt(2.0)}
    one = {+1: (l1 - r1) / math.sqrt(2.0), -1: (l1 + r1) / math.sqrt(2.0)}
    # x<x|0>^∓ = <x|1>^±/sqrt(2) - a<x|0>^±, so this term removes the |0>^± component
    corr = math.sqrt(2.0) * math.exp(-a * a) * x
    return {
        "phi0+": xi0p * zero[+1],
        "phi0-": xi0m * zero[-1],
        "phi1+": xi1p * (one[+1] + corr * zero[-1]),
        "phi1-": xi1m * (one[-1] - corr * zero[+1]),
    }


def _gram_schmidt(samples: np.ndarray, carried: np.ndarray, grid: QuadratureGrid):
    """Modified Gram-Schmidt on sampled functions with one reorthogonalisation pass.

    ``carried`` rows (the exact x-derivatives) undergo the same linear
    operations as ``samples`` but never enter the inner products. Each output
    keeps a positive overlap with its input function.
    """
    q, dq = np.array(samples, dtype=float), np.array(carried, dtype=float)
    w = grid.weights
    for k in range(q.shape[0]):
        v, dv = q[k].copy(), dq[k].copy()
        for _ in range(2):
            for j in range(k):
                c = (q[j] * w) @ v
                v -= c * q[j]
                dv -= c * dq[j]
        nrm = math.sqrt((v * w) @ v)
        if not nrm > 0:
            raise DegenerateSeparationError("parity set became linearly dependent")
        sign = 1.0 if (v * w) @ samples[k] > 0 else -1.0
        q[k], dq[k] = sign * v / nrm, sign * dv / nrm
    return q, dq


@dataclass(frozen=True, eq=False)
class SingleParticleBasis:
    """Orthonormal trap-localised states at one half-separation ``a``.

    Mode ``m`` runs over ``[0L, 1L, ..., (n-1)L, 0R, ..., (n-1)R]`` with
    ``n = n_sp // 2`` levels per trap. ``functions`` and ``derivatives`` are
    sampled on ``grid``; ``phi_plus``/``phi_minus`` are the orthonormal
    parity states the modes are built from.
    """

    n_sp: int
    a: float
    grid: QuadratureGrid
    functions: np.ndarray = field(repr=False)
    derivatives: np.ndarray = field(repr=False)
    phi_plus: np.ndarray = field(repr=False)
    phi_minus: np.ndarray = field(repr=False)

    @property
    def levels(self) -> int:
        return self.n_sp // 2

    def mode_label(self, m: int) -> str:
        n = self.levels
        return f"{m % n}{'L' if m < n else 'R'}"

    @property
    def left(self) -> np.ndarray:
        return self.functions[: self.levels]

    @property
    def right(self) -> np.ndarray:
        return self.functions[self.levels :]

    def parity_functions(self, sign: int) -> np.ndarray:
        return self.phi_plus if sign > 0 else self.phi_minus

    def gram(self) -> np.ndarray:
        f = self.functions
        return self.grid.inner(f, f)


def build_orthonormal_basis(n_sp: int, a: float, grid: QuadratureGrid) -> SingleParticleBasis:
    """Gram-Schmidt basis of ``n_sp`` modes (``n_sp/2`` per trap) at separation ``a``."""
    if n_sp % 2 or not 2 <= n_sp <= 12:
        raise InvalidParameterError(f"n_sp must be even and within 2..12, got {n_sp}")
    if a <= DEGENERACY_FLOOR:
        raise DegenerateSeparationError(
            f"separation {a} at or below degeneracy floor {DEGENERACY_FLOOR}"
        )
    n = n_sp // 2
    if n - 1 > MAX_LEVEL:
        raise InvalidParameterError(f"n_sp={n_sp} needs levels beyond {MAX_LEVEL}")
    grid.check_covers(a)
    x = grid.x
    left = np.array([hermite_function(i, x + a) for i in range(n)])
    right = np.array([hermite_function(i, x - a) for i in range(n)])
    dleft = np.array([hermite_function_derivative(i, x + a) for i in range(n)])
    dright = np.array([hermite_function_derivative(i, x - a) for i in range(n)])
    sign = np.array([(-1.0) ** i for i in range(n)])[:, None]
    phi, dphi = {}, {}
    for s in (+1, -1):
        raw = (left + s * sign * right) / math.sqrt(2.0)
        draw = (dleft + s * sign * dright) / math.sqrt(2.0)
        phi[s], dphi[s] = _gram_schmidt(raw, draw, grid)
    functions = np.vstack(
        [(phi[1] + phi[-1]) / math.sqrt(2.0), sign * (phi[1] - phi[-1]) / math.sqrt(2.0)]
    )
    derivatives = np.vstack(
        [(dphi[1] + dphi[-1]) / math.sqrt(2.0), sign * (dphi[1] - dphi[-1]) / math.sqrt(2.0)]
    )
    basis = SingleParticleBasis(
        n_sp=n_sp, a=float(a), grid=grid, functions=functions, derivatives=derivatives,
        phi_plus=phi[1], phi_minus=phi[-1],
    )
    residual = np.max(np.abs(basis.gram() - np.eye(n_sp)))
    if residual > GRAM_TOLERANCE:
        raise ResolutionError(f"Gram residual {residual:.3g} exceeds {GRAM_TOLERANCE}")
    return basis


def dump_basis_csv(basis: SingleParticleBasis, path) -> None:
    """Write sampled basis functions as CSV: x followed by one column per mode."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x"] + [basis.mode_label(m) for m in range(basis.n_sp)])
        for k, xk in enumerate(basis.grid.x):
            writer.writerow([f"{xk:.12g}"] + [f"{v:.12g}" for v in basis.functions[:, k]])

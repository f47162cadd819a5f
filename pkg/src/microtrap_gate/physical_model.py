"""Physical parameters, reduction to oscillator units, trap potential and trajectory.

Everything downstream works in oscillator units of the longitudinal trap:
length ``1/alpha = sqrt(hbar / (m * omega_x))``, time ``1/omega_x`` and energy
``hbar * omega_x``. SI values only appear in :class:`PhysicalParams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HBAR = 1.054571817e-34  # J s
BOHR_RADIUS = 5.29177210903e-11  # m
MASS_RB87 = 1.44316e-25  # kg
MASS_RB85 = 1.40999e-25  # kg


class InvalidParameterError(ValueError):
    """Raised when a physical or numerical parameter is out of range."""


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


@dataclass(frozen=True)
class TrapTrajectory:
    """Half-separation schedule a(tau): cosine ramp in, plateau, mirrored ramp out.

    All quantities are dimensionless (lengths in 1/alpha, times in 1/omega_x).
    """

    a_max: float
    a_min: float
    t_r: float
    t_i: float

    def __post_init__(self):
        if not (self.a_max >= self.a_min > 0):
            raise InvalidParameterError(
                f"need a_max >= a_min > 0, got a_max={self.a_max}, a_min={self.a_min}"
            )
        if not self.t_r > 0:
            raise InvalidParameterError(f"t_r must be positive, got {self.t_r}")
        if not self.t_i >= 0:
            raise InvalidParameterError(f"t_i must be non-negative, got {self.t_i}")

    @property
    def total_time(self) -> float:
        return 2.0 * self.t_r + self.t_i

    def separation(self, tau):
        return trap_separation(tau, self)

    def velocity(self, tau):
        return trap_velocity(tau, self)


@dataclass(frozen=True)
class PhysicalParams:
    """Experimental parameters in SI units plus the dimensionless trajectory.

    ``a_max``/``a_min`` are in units of 1/alpha and ``t_r``/``t_i`` in units of
    1/omega_x, as they are quoted for the figures.
    """

    omega_x: float
    omega_p: float
    mass: float
    a_t: float
    a_max: float
    a_min: float
    t_r: float
    t_i: float

    def __post_init__(self):
        for name in ("omega_x", "omega_p", "mass"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be positive, got {value}")
        if not math.isfinite(self.a_t):
            raise InvalidParameterError(f"a_t must be finite, got {self.a_t}")

    @property
    def trajectory(self) -> TrapTrajectory:
        return TrapTrajectory(self.a_max, self.a_min, self.t_r, self.t_i)


@dataclass(frozen=True)
class DimensionlessModel:
    """Reduced model: contact coupling ``g`` and the trap trajectory.

    ``g`` multiplies ``delta(x1 - x2)`` in units of hbar*omega_x/alpha.
    """

    g: float
    alpha_inv: float
    trajectory: TrapTrajectory


def oscillator_length(mass: float, omega_x: float) -> float:
    """Ground-state position uncertainty 1/alpha in metres."""
    return math.sqrt(HBAR / (mass * omega_x))


def derive_dimensionless(params: PhysicalParams) -> DimensionlessModel:
    """Reduce the effective 1D contact potential ``2 a_t hbar omega_p delta(x1-x2)``.

    With x -> x/alpha and energies in hbar*omega_x the prefactor becomes
    ``g = 2 * a_t * alpha * omega_p / omega_x``.
    """
    for name in ("omega_x", "omega_p", "mass"):
        value = getattr(params, name)
        if not value > 0:
            raise InvalidParameterError(f"{name} must be positive, got {value}")
    alpha_inv = oscillator_length(params.mass, params.omega_x)
    g = 2.0 * (params.a_t / alpha_inv) * (params.omega_p / params.omega_x)
    return DimensionlessModel(g=g, alpha_inv=alpha_inv, trajectory=params.trajectory)


def _ramp_phase(tau, traj: TrapTrajectory):
    """Map tau onto the ramp-in clock s in [0, t_r] (plateau clamps to t_r)."""
    tau = np.asarray(tau, dtype=float)
    total = traj.total_time
    # one-ulp slack so float sums like 2*t_r + t_i stay inside the domain
    slack = 4 * np.finfo(float).eps * max(total, 1.0)
    if np.any(tau < -slack) or np.any(tau > total + slack):
        raise DomainError(f"tau must lie in [0, {total}]")
    tau = np.clip(tau, 0.0, total)
    s = np.minimum(tau, total - tau)
    return np.minimum(s, traj.t_r), np.where(tau <= total / 2, 1.0, -1.0), s < traj.t_r


def trap_separation(tau, traj: TrapTrajectory):
    """Half-separation a(tau).

    Ramp in: ``a_min + (a_max - a_min) cos(pi tau / (2 t_r))``; plateau at
    ``a_min`` for ``t_r <= tau <= t_r + t_i``; ramp out mirrored about the
    midpoint of the run.
    """
    s, _, ramping = _ramp_phase(tau, traj)
    a = traj.a_min + (traj.a_max - traj.a_min) * np.cos(0.5 * np.pi * s / traj.t_r)
    a = np.where(ramping, a, traj.a_min)
    return float(a) if a.ndim == 0 else a


def trap_velocity(tau, traj: TrapTrajectory):
    """Analytic da/dtau (zero on the plateau; one-sided at the kinks)."""
    s, sign, ramping = _ramp_phase(tau, traj)
    rate = 0.5 * np.pi / traj.t_r
    v = np.where(ramping, -sign * (traj.a_max - traj.a_min) * rate * np.sin(rate * s), 0.0)
    return float(v) if v.ndim == 0 else v


def potential(x, a):
    """Piecewise-harmonic double well ``(x + a)^2/2`` for x < 0, ``(x - a)^2/2`` for x >= 0."""
    x = np.asarray(x, dtype=float)
    v = 0.5 * (np.abs(x) - a) ** 2
    return float(v) if v.ndim == 0 else v

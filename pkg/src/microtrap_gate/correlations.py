"""Quantum-correlation measures for two-boson states.

A state is written in second quantisation as
``|v> = sum_ij v_ij b_i^dag b_j^dag |vac>`` with ``v`` complex symmetric and
``tr(v^dag v) = 1/2``. Its Slater decomposition ``v = U diag(lambda) U^T``
comes from the Takagi factorisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tp_basis import LABELS, AmplitudeVector, TwoParticleBasis, embedding_coefficients

SLATER_THRESHOLD = 1e-10


class UndefinedEntropyError(ValueError):
    """Raised when an entropy is requested for a (numerically) empty state."""


def amplitudes_to_mode_matrix(v: AmplitudeVector) -> np.ndarray:
    """Symmetric mode matrix of a two-boson state.

    With the first-quantised tensor ``T`` of the state, ``v = T / sqrt(2)``:
    amplitude ``c`` on a pair of distinct modes gives ``v_ij = v_ji = c/2``
    and amplitude ``d`` on a doubly occupied mode gives ``v_ii = d/sqrt(2)``.
    """
    t = v.tensor()
    return 0.5 * (t + t.T) / math.sqrt(2.0)


def mode_matrix_to_amplitudes(mode: np.ndarray, basis: TwoParticleBasis) -> np.ndarray:
    """Inverse of :func:`amplitudes_to_mode_matrix` (coefficients over ``basis``)."""
    t = math.sqrt(2.0) * np.asarray(mode)
    return np.tensordot(basis.tensors, t, axes=([1, 2], [0, 1]))


def takagi(v: np.ndarray, tol: float = 1e-13) -> tuple[np.ndarray, np.ndarray]:
    """Takagi factorisation ``v = U @ diag(lam) @ U.T`` of a complex symmetric matrix.

    ``lam`` is non-negative and descending, ``U`` unitary. For ``v = B + iC``
    the vectors ``u = x + iy`` with ``v conj(u) = lam u`` are the eigenvectors
    ``[x; y]`` of the real symmetric matrix ``[[B, C], [C, -B]]`` with
    eigenvalue ``lam``; eigenvalues come in ``±lam`` pairs and real-orthonormal
    eigenvectors of one sign give complex-orthonormal ``u``, degenerate
    subspaces included. Columns for zero ``lam`` complete the unitary.
    """
    v = np.asarray(v, dtype=complex)
    n = v.shape[0]
    if v.shape != (n, n):
        raise ValueError("takagi needs a square matrix")
    v = 0.5 * (v + v.T)
    scale = np.max(np.abs(v)) if v.size else 0.0
    if scale == 0.0:
        return np.eye(n, dtype=complex), np.zeros(n)
    b, c = v.real, v.imag
    big = np.block([[b, c], [c, -b]])
    w, vec = np.linalg.eigh(big)
    order = np.argsort(w)[::-1][:n]
    lam = w[order]
    u = vec[:n, order] + 1j * vec[n:, order]
    rank = int(np.sum(lam > tol * scale * n))
    if rank < n:
        # complete span(u[:, :rank]) to a unitary; the complement satisfies v conj(u) = 0
        q, _ = np.linalg.qr(np.hstack([u[:, :rank], np.eye(n, dtype=complex)]))
        u = np.hstack([u[:, :rank], q[:, rank:n]])
        lam = np.concatenate([lam[:rank], np.zeros(n - rank)])
    return u, np.clip(lam, 0.0, None)


@dataclass(frozen=True)
class SlaterSpectrum:
    coefficients: np.ndarray  # lambda_i, descending
    rank: int
    entropy: float


def slater_spectrum(v: np.ndarray, raw: bool = False) -> SlaterSpectrum:
    """Slater coefficients, rank and bosonic entropy of a mode matrix."""
    _, lam = takagi(v)
    total = float(np.sum(lam**2))
    if total <= 0.0:
        raise UndefinedEntropyError("all-zero Slater spectrum")
    rank = int(np.sum(lam**2 / total > SLATER_THRESHOLD))
    return SlaterSpectrum(lam, rank, bosonic_entropy(lam, raw=raw))


def bosonic_entropy(lam, raw: bool = False) -> float:
    """``-sum p_k log2 p_k`` over ``p_k = lambda_k^2 / sum_j lambda_j^2``.

    The renormalisation makes a single Slater term give 0 and ``N`` equal terms
    give ``log2 N``. ``raw=True`` uses ``p_k = lambda_k^2`` unnormalised, for
    comparison only.
    """
    lam = np.asarray(lam.coefficients if isinstance(lam, SlaterSpectrum) else lam, dtype=float)
    p = lam**2
    total = p.sum()
    if total <= 0.0:
        raise UndefinedEntropyError("all-zero Slater spectrum")
    if not raw:
        p = p / total
    p = p[p > 0.0]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Base-2 entropy of a density matrix; ``0 log 0 = 0``."""
    ev = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    ev = ev[ev > 1e-15]
    return float(-np.sum(ev * np.log2(ev)))


def projected_entropy(v: AmplitudeVector) -> tuple[float, float]:
    """Entanglement of the state projected onto the computational subspace.

    The projection onto ``{|00>+, |01>+, |01>-, |11>+}`` is renormalised and
    read as a two-qubit state of distinguishable atoms (left trap = qubit A).
    Returns ``(S, p_single)``.
    """
    e = np.array([embedding_coefficients(lab, v.basis) for lab in LABELS])
    amps = e.conj() @ v.coefficients
    p_single = float(np.sum(np.abs(amps) ** 2))
    if p_single < 1e-12:
        raise UndefinedEntropyError(f"projection weight {p_single:.3g} too small")
    psi = (amps / math.sqrt(p_single)).reshape(2, 2)
    return von_neumann_entropy(psi @ psi.conj().T), p_single


def occupation_matrix(v: AmplitudeVector) -> np.ndarray:
    """Fock amplitudes arranged as (left-mode configuration, right-mode configuration).

    Configurations of each side are: vacuum, one boson in mode ``m`` and two
    bosons in modes ``m <= m'``. Fock amplitude of ``|1_m 1_n>`` is ``2 v_mn``
    and of ``|2_m>`` is ``sqrt(2) v_mm``.
    """
    mode = amplitudes_to_mode_matrix(v)
    n = v.basis.levels
    left, right = list(range(n)), list(range(n, 2 * n))

    def configs(modes):
        out = [()]
        out += [(m,) for m in modes]
        out += [(m, k) for i, m in enumerate(modes) for k in modes[i:]]
        return out

    cl, cr = configs(left), configs(right)
    index_l = {c: i for i, c in enumerate(cl)}
    index_r = {c: i for i, c in enumerate(cr)}
    psi = np.zeros((len(cl), len(cr)), dtype=complex)
    for i, m in enumerate(range(2 * n)):
        for k in range(m, 2 * n):
            amp = math.sqrt(2.0) * mode[m, m] if m == k else 2.0 * mode[m, k]
            occ_l = tuple(x for x in (m, k) if x < n)
            occ_r = tuple(x for x in (m, k) if x >= n)
            psi[index_l[occ_l], index_r[occ_r]] += amp
    return psi


def occupation_entropy(v: AmplitudeVector) -> float:
    """Entropy of the left-mode occupations in the occupation-number representation."""
    psi = occupation_matrix(v)
    return von_neumann_entropy(psi @ psi.conj().T)


@dataclass(frozen=True)
class CorrelationSample:
    time: float
    bosonic_entropy: float
    slater_rank: int
    projected_entropy: float
    p_single: float
    occupation_entropy: float

    def row(self) -> dict:
        return {
            "time": self.time,
            "S_B_half": 0.5 * self.bosonic_entropy,
            "slater_rank": self.slater_rank,
            "S": self.projected_entropy,
            "p_single": self.p_single,
            "S_p_single": self.projected_entropy * self.p_single,
            "S_Z": self.occupation_entropy,
        }


def correlation_sample(v: AmplitudeVector, raw: bool = False) -> CorrelationSample:
    spec = slater_spectrum(amplitudes_to_mode_matrix(v), raw=raw)
    try:
        s, p = projected_entropy(v)
    except UndefinedEntropyError:
        s, p = float("nan"), 0.0
    return CorrelationSample(v.time, spec.entropy, spec.rank, s, p, occupation_entropy(v))


def correlation_trace(states, raw: bool = False) -> list[CorrelationSample]:
    return [correlation_sample(v, raw=raw) for v in states]

"""Symmetrised two-boson basis with definite parity, and the qubit embedding.

Single-particle modes are indexed ``m = i`` for ``|i>_L`` and ``m = n + i`` for
``|i>_R`` (``n`` levels per trap). Parity maps ``|i>_L -> (-1)^i |i>_R``.

Two-particle states are stored as symmetric tensors over ordered mode pairs
(first-quantised amplitudes ``T[m, n]`` of ``|m>_1 |n>_2``). The basis is:

* single occupancy, ``i <= j``: ``|ij>^± = (S(iL, jR) ± (-1)^{i+j} S(jL, iR)) / sqrt(2)``
  (only ``+`` exists for ``i == j``, where both terms coincide),
* double occupancy, ``i <= j``: ``|~ij>^± = (S(iL, jL) ± (-1)^{i+j} S(iR, jR)) / sqrt(2)``,

with ``S(p, q) = (|pq> + |qp>)/sqrt(2)`` for ``p != q`` and ``S(p, p) = |pp>``.
Ordering: parity block (+ first), then occupancy (single first), then levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .physical_model import InvalidParameterError

LABELS = ("00", "01", "10", "11")


@dataclass(frozen=True)
class TwoParticleState:
    levels: tuple[int, int]
    parity: int
    occupancy: str  # "single" or "double"

    @property
    def quanta(self) -> int:
        return self.levels[0] + self.levels[1]

    @property
    def name(self) -> str:
        i, j = self.levels
        tilde = "~" if self.occupancy == "double" else ""
        return f"|{tilde}{i}{j}>{'+' if self.parity > 0 else '-'}"

    def modes(self, n: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """Mode pairs of the two symmetrised terms (first term, parity partner)."""
        i, j = self.levels
        if self.occupancy == "single":
            return (i, n + j), (j, n + i)
        return (i, j), (n + i, n + j)


def _pair_tensor(p: int, q: int, dim: int) -> np.ndarray:
    t = np.zeros((dim, dim))
    if p == q:
        t[p, p] = 1.0
    else:
        t[p, q] = t[q, p] = 1.0 / math.sqrt(2.0)
    return t


@dataclass(frozen=True, eq=False)
class TwoParticleBasis:
    n_sp: int
    states: tuple[TwoParticleState, ...]

    @property
    def dimension(self) -> int:
        return len(self.states)

    @property
    def levels(self) -> int:
        return self.n_sp // 2

    def index(self, levels, parity: int, occupancy: str = "single") -> int:
        key = TwoParticleState(tuple(levels), parity, occupancy)
        try:
            return self.states.index(key)
        except ValueError:
            raise KeyError(f"no basis state {key.name}") from None

    @cached_property
    def tensors(self) -> np.ndarray:
        """Product-space representation, shape (dimension, n_sp, n_sp)."""
        n, dim = self.levels, self.n_sp
        out = np.zeros((self.dimension, dim, dim))
        for k, st in enumerate(self.states):
            (p1, q1), (p2, q2) = st.modes(n)
            first = _pair_tensor(p1, q1, dim)
            if st.occupancy == "single" and st.levels[0] == st.levels[1]:
                out[k] = first
                continue
            second = _pair_tensor(p2, q2, dim)
            out[k] = (first + st.parity * (-1) ** st.quanta * second) / math.sqrt(2.0)
        return out

    @cached_property
    def embedding_matrix(self) -> np.ndarray:
        """Columns are the product-space vectors of the basis, shape (n_sp**2, dimension)."""
        return self.tensors.reshape(self.dimension, -1).T

    @cached_property
    def quanta(self) -> np.ndarray:
        return np.array([st.quanta for st in self.states])

    @cached_property
    def parities(self) -> np.ndarray:
        return np.array([st.parity for st in self.states])

    @cached_property
    def double_mask(self) -> np.ndarray:
        return np.array([st.occupancy == "double" for st in self.states])

    def metadata(self) -> list[dict]:
        """Per-index labelling, written into output headers."""
        n = self.levels
        names = ["L"] * n + ["R"] * n
        out = []
        for k, st in enumerate(self.states):
            pairs = [
                [f"{p % n}{names[p]}", f"{q % n}{names[q]}"] for p, q in st.modes(n)
            ]
            out.append({
                "index": k,
                "name": st.name,
                "levels": list(st.levels),
                "mode_pairs": pairs,
                "parity": st.parity,
                "occupancy": st.occupancy,
            })
        return out


def enumerate_basis(n_sp: int) -> TwoParticleBasis:
    """All symmetrised parity-definite two-boson states over ``n_sp`` modes."""
    if n_sp < 2 or n_sp % 2:
        raise InvalidParameterError(f"n_sp must be even and >= 2, got {n_sp}")
    n = n_sp // 2
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    states = []
    for parity in (+1, -1):
        for occupancy in ("single", "double"):
            for i, j in pairs:
                if occupancy == "single" and i == j and parity < 0:
                    continue
                states.append(TwoParticleState((i, j), parity, occupancy))
    return TwoParticleBasis(n_sp=n_sp, states=tuple(states))


@dataclass
class AmplitudeVector:
    """Complex coefficients over a :class:`TwoParticleBasis` at dimensionless time ``time``."""

    coefficients: np.ndarray
    basis: TwoParticleBasis
    time: float = 0.0

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=complex)
        if self.coefficients.shape != (self.basis.dimension,):
            raise ValueError(
                f"expected {self.basis.dimension} coefficients, got {self.coefficients.shape}"
            )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def populations(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    def tensor(self) -> np.ndarray:
        """First-quantised symmetric amplitude tensor ``T[m, n]``."""
        return np.tensordot(self.coefficients, self.basis.tensors, axes=1)


def embedding_coefficients(label: str, basis: TwoParticleBasis) -> np.ndarray:
    """Coefficient vector of computational state ``label`` (``00``, ``01``, ``10``, ``11``)."""
    if basis.n_sp < 4:
        raise InvalidParameterError("qubit embedding needs n_sp >= 4")
    c = np.zeros(basis.dimension, dtype=complex)
    r = 1.0 / math.sqrt(2.0)
    if label == "00":
        c[basis.index((0, 0), +1)] = 1.0
    elif label == "11":
        c[basis.index((1, 1), +1)] = 1.0
    elif label in ("01", "10"):
        c[basis.index((0, 1), +1)] = r
        c[basis.index((0, 1), -1)] = r if label == "01" else -r
    else:
        raise KeyError(f"unknown computational label {label!r}")
    return c


def computational_embedding(label: str, basis: TwoParticleBasis) -> AmplitudeVector:
    return AmplitudeVector(embedding_coefficients(label, basis), basis)


@dataclass(frozen=True)
class Extraction:
    amplitudes: np.ndarray  # over LABELS
    p_single: float
    p_double: float
    p_leak: float


def computational_extraction(v: AmplitudeVector) -> Extraction:
    """Project onto the four embedded qubit states and split the remainder.

    ``p_single`` is the weight inside the computational subspace, ``p_double``
    the total double-occupancy population and ``p_leak`` everything else.
    """
    basis = v.basis
    e = np.array([embedding_coefficients(lab, basis) for lab in LABELS])
    amps = e.conj() @ v.coefficients
    pops = v.populations()
    p_single = float(np.sum(np.abs(amps) ** 2))
    p_double = float(pops[basis.double_mask].sum())
    p_leak = float(pops.sum()) - p_single - p_double
    return Extraction(amps, p_single, p_double, p_leak)

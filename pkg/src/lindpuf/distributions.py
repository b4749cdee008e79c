"""POVMs, output distributions, total variation and test-function expectations."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ops import DimensionError, as_matrix, is_hermitian

POVM_ATOL = 1e-10
QUBIT_CAP = 12


class OutcomeMismatch(ValueError):
    """Raised when two distributions live on different outcome sets."""


@dataclass(frozen=True, eq=False)
class Povm:
    """POVM elements stacked as an array of shape (|X|, d, d)."""

    elements: np.ndarray
    labels: tuple[str, ...]
    # set when every element is diagonal in the computational basis
    diagonal: np.ndarray | None = None

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=complex)
        if el.ndim != 3 or el.shape[1] != el.shape[2]:
            raise DimensionError("POVM elements must have shape (K, d, d)")
        if len(self.labels) != el.shape[0] or len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be distinct and match the number of elements")
        object.__setattr__(self, "elements", el)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def __len__(self) -> int:
        return self.elements.shape[0]

    def check(self, atol: float = POVM_ATOL) -> None:
        """Verify 0 <= M_x <= I and completeness; raise ValueError otherwise."""
        total = np.zeros((self.dim, self.dim), dtype=complex)
        for lab, m in zip(self.labels, self.elements):
            if not is_hermitian(m, atol):
                raise ValueError(f"element {lab} is not Hermitian")
            ev = np.linalg.eigvalsh(m)
            if ev[0] < -atol or ev[-1] > 1 + atol:
                raise ValueError(f"element {lab} is not between 0 and I")
            total += m
        if np.max(np.abs(total - np.eye(self.dim))) > atol:
            raise ValueError("POVM elements do not sum to the identity")


def bitstrings(n: int) -> list[str]:
    return ["".join(b) for b in itertools.product("01", repeat=n)]


def computational_povm(n_qubits: int, cap: int = QUBIT_CAP) -> Povm:
    """Rank-one projectors |x><x| in lexicographic bitstring order."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if n_qubits > cap:
        raise DimensionError(f"{n_qubits} qubits exceeds cap {cap}")
    d = 2**n_qubits
    el = np.zeros((d, d, d), dtype=complex)
    el[np.arange(d), np.arange(d), np.arange(d)] = 1.0
    return Povm(el, tuple(bitstrings(n_qubits)), diagonal=np.eye(d))


def block_povm(blocks: Sequence[Sequence[int]], labels: Sequence[str] | None = None) -> Povm:
    """Projectors onto coordinate subspaces given by a partition of {0..d-1}."""
    flat = [i for b in blocks for i in b]
    d = len(flat)
    if d == 0 or any(len(b) == 0 for b in blocks):
        raise ValueError("blocks must be nonempty")
    if sorted(flat) != list(range(d)):
        raise ValueError("blocks must form an exact partition of {0, ..., d-1}")
    diag = np.zeros((len(blocks), d))
    for k, b in enumerate(blocks):
        diag[k, list(b)] = 1.0
    el = np.zeros((len(blocks), d, d), dtype=complex)
    for k in range(len(blocks)):
        el[k] = np.diag(diag[k])
    if labels is None:
        labels = [f"B{k}" for k in range(len(blocks))]
    return Povm(el, tuple(labels), diagonal=diag)


@dataclass(frozen=True, eq=False)
class OutputDistribution:
    """Real weights over labelled outcomes; may be slightly signed."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size != len(self.labels):
            raise ValueError("values must be a vector matching labels")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def is_physical(self) -> bool:
        return bool(self.values.min(initial=0.0) >= -1e-9)

    def __len__(self) -> int:
        return self.values.size

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.values.tolist()))


def point_mass(labels: Sequence[str], label: str) -> OutputDistribution:
    v = np.zeros(len(labels))
    v[list(labels).index(label)] = 1.0
    return OutputDistribution(tuple(labels), v)


def uniform_distribution(labels: Sequence[str]) -> OutputDistribution:
    return OutputDistribution(tuple(labels), np.full(len(labels), 1.0 / len(labels)))


def output_distribution(rho_t, povm: Povm) -> OutputDistribution:
    """P(x) = Re Tr(M_x rho_t); the imaginary residue is asserted to vanish."""
    rho_t = as_matrix(rho_t)
    if rho_t.shape[0] != povm.dim:
        raise DimensionError("state and POVM dims differ")
    if povm.diagonal is not None:
        raw = povm.diagonal @ np.diag(rho_t)
    else:
        raw = np.einsum("xij,ji->x", povm.elements, rho_t)
    if np.max(np.abs(raw.imag), initial=0.0) > 1e-10:
        raise ValueError("probabilities have a non-negligible imaginary part")
    return OutputDistribution(povm.labels, raw.real)


def _same_support(p: OutputDistribution, q: OutputDistribution) -> None:
    if p.labels != q.labels:
        raise OutcomeMismatch("distributions are defined on different outcome sets")


def tv_distance(p: OutputDistribution, q: OutputDistribution) -> float:
    _same_support(p, q)
    return 0.5 * float(np.sum(np.abs(p.values - q.values)))


def check_test_function(phi, size: int | None = None) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1:
        raise ValueError("test function must be a vector over outcomes")
    if size is not None and phi.size != size:
        raise DimensionError(f"test function has {phi.size} values, expected {size}")
    if np.any(np.abs(phi) > 1.0):
        raise ValueError("test function values must lie in [-1, 1]")
    return phi


def expectation(p: OutputDistribution, phi) -> float:
    phi = check_test_function(phi, len(p))
    return float(phi @ p.values)


def observable_of(phi, povm: Povm) -> np.ndarray:
    """O_phi = sum_x phi(x) M_x."""
    phi = check_test_function(phi, len(povm))
    return np.einsum("x,xij->ij", phi.astype(complex), povm.elements)

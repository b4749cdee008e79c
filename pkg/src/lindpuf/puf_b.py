"""Tomography-based Lindbladian PUF.

The verifier stores the full table y[k, j] ~ Tr[G_k E(F_j)] over
tomographically complete operator families and later accepts a prover whose
reproduced table agrees entrywise within 2 tau.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import one_to_one_norm_lb
from .ops import PAULIS, DimensionError, is_hermitian, kron_all, operator_norm, trace_norm, unvec, vec
from .oracles import QPStatOracle

QUBIT_CAP = 4


@dataclass(frozen=True, eq=False)
class TomographicBasis:
    """Input family F_j (trace norm <= 1) and observable family G_k (operator norm <= 1)."""

    dim: int
    inputs: np.ndarray
    observables: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        d, D = self.dim, self.dim**2
        for fam, label in ((self.inputs, "inputs"), (self.observables, "observables")):
            if fam.shape != (D, d, d):
                raise DimensionError(f"{label} must have shape {(D, d, d)}")
            if not all(is_hermitian(x, 1e-12) for x in fam):
                raise ValueError(f"{label} must be Hermitian")
            real = np.concatenate([fam.reshape(D, -1).real, fam.reshape(D, -1).imag], axis=1)
            if np.linalg.matrix_rank(real) != D:
                raise ValueError(f"{label} do not span the Hermitian operators")
        if max(trace_norm(f) for f in self.inputs) > 1 + 1e-10:
            raise ValueError("inputs must have trace norm <= 1")
        if max(operator_norm(g) for g in self.observables) > 1 + 1e-10:
            raise ValueError("observables must have operator norm <= 1")

    @property
    def size(self) -> int:
        return self.dim**2


def pauli_strings(n_qubits: int) -> tuple[list[str], np.ndarray]:
    """All tensor Pauli strings in lexicographic order over {I, X, Y, Z}^n."""
    names = ["".join(s) for s in itertools.product("IXYZ", repeat=n_qubits)]
    mats = np.array([kron_all(*(PAULIS[c] for c in s)) for s in names])
    return names, mats


def pauli_tomographic_basis(n_qubits: int, cap: int = QUBIT_CAP) -> TomographicBasis:
    """G_k = P_k and F_j = P_j / d."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if n_qubits > cap:
        raise DimensionError(f"{n_qubits} qubits exceeds cap {cap}")
    names, mats = pauli_strings(n_qubits)
    d = 2**n_qubits
    return TomographicBasis(d, mats / d, mats, tuple(names))


@dataclass(frozen=True, eq=False)
class FingerprintMatrix:
    entries: np.ndarray  # y[k, j]
    tau: float = 0.0

    def __sub__(self, other: "FingerprintMatrix") -> "FingerprintMatrix":
        return FingerprintMatrix(self.entries - other.entries, self.tau + other.tau)


def fingerprint(oracle: QPStatOracle, basis: TomographicBasis) -> FingerprintMatrix:
    """Setup phase: one QPStat query per (k, j), D^2 in total."""
    if not oracle.extended:
        raise ValueError("tomographic inputs are not states; an extended oracle is required")
    D = basis.size
    y = np.empty((D, D))
    for j in range(D):
        for k in range(D):
            y[k, j] = oracle.query(basis.inputs[j], basis.observables[k])
    return FingerprintMatrix(y, oracle.tau)


def _as_callable(channel) -> Callable:
    if callable(channel):
        return channel
    mat = np.asarray(channel)
    return lambda x: unvec(mat @ vec(x))


def exact_fingerprint(channel, basis: TomographicBasis) -> FingerprintMatrix:
    """Tr[G_k T(F_j)] for a callable map or a superoperator matrix."""
    fn = _as_callable(channel)
    outs = np.array([fn(f) for f in basis.inputs])
    y = np.real(np.einsum("kab,jba->kj", basis.observables, outs))
    return FingerprintMatrix(y)


def reconstruct_channel(y: FingerprintMatrix, basis: TomographicBasis) -> np.ndarray:
    """The unique linear map whose fingerprint is ``y``, as a d^2 x d^2 matrix.

    Solves Tr[G_k X_j] = y[k, j] for each X_j := T(F_j), then T = X F^{-1}
    on column-major vectorization. T need not be completely positive.
    """
    D = basis.size
    # Tr[G X] = vec(G^T) . vec(X)
    a = np.array([vec(g.T) for g in basis.observables])
    x_cols = np.linalg.solve(a, y.entries.astype(complex))
    f_cols = np.array([vec(f) for f in basis.inputs]).T
    return np.linalg.solve(f_cols.T, x_cols.T).T if D else x_cols


def tom_norm(delta_y: FingerprintMatrix | np.ndarray) -> float:
    e = delta_y.entries if isinstance(delta_y, FingerprintMatrix) else np.asarray(delta_y)
    return float(np.max(np.abs(e), initial=0.0))


def verify(y_enrolled: FingerprintMatrix, y_prime: FingerprintMatrix, tau: float,
           c0: float = 2.0) -> tuple[bool, float]:
    """Accept iff every entry agrees within c0 * tau; also return the worst deviation."""
    if y_enrolled.entries.shape != y_prime.entries.shape:
        raise ValueError("fingerprint shapes differ")
    worst = tom_norm(y_prime.entries - y_enrolled.entries)
    return bool(worst <= c0 * tau), worst


def honest_responses(oracle: QPStatOracle, basis: TomographicBasis) -> FingerprintMatrix:
    """An honest prover re-queries the genuine device for every challenge."""
    return fingerprint(oracle, basis)


@dataclass(frozen=True)
class NormChainReport:
    lb_1to1: float
    tom_can: float
    ratio: float
    holds: bool


def canonical_pauli_basis(dim: int) -> np.ndarray:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise DimensionError("canonical Pauli basis needs a qubit dimension")
    _, mats = pauli_strings(n)
    return mats / math.sqrt(dim)


def tom_can_norm(channel, dim: int) -> float:
    """max |Tr[H_mu T(H_nu)]| over the Hilbert-Schmidt-normalized Pauli basis."""
    h = canonical_pauli_basis(dim)
    fn = _as_callable(channel)
    outs = np.array([fn(x) for x in h])
    return float(np.max(np.abs(np.einsum("mab,nba->mn", h, outs))))


def norm_chain_check(map_matrix, basis: TomographicBasis | None = None, rng=0,
                     n_samples: int = 200, strict: bool = True) -> NormChainReport:
    """Check sampled ||T||_{1->1} <= d^{5/2} ||T||_{tom,can}.

    tom_can always uses the canonical Pauli family H_mu = P_mu / sqrt(d);
    ``basis`` only fixes the dimension. The left side is a sampled lower
    bound, so a violation would be a genuine counterexample; with ``strict``
    it raises AssertionError.
    """
    mat = np.asarray(map_matrix)
    dim = math.isqrt(mat.shape[0])
    if basis is not None and basis.dim != dim:
        raise DimensionError("map and basis dimensions differ")
    lb = one_to_one_norm_lb(mat, n_samples, rng)
    tc = tom_can_norm(mat, dim)
    bound = dim**2.5 * tc
    holds = lb <= bound * (1 + 1e-6) + 1e-12
    if strict and not holds:
        raise AssertionError(f"norm chain violated: {lb} > {bound}")
    ratio = lb / bound if bound > 0 else 0.0
    return NormChainReport(lb, tc, ratio, holds)


def depolarizing_superop(dim: int) -> np.ndarray:
    """Fully depolarizing channel X -> Tr(X) I/d."""
    return np.outer(vec(np.eye(dim) / dim), vec(np.eye(dim)).conj())


def write_fingerprint_csv(y: FingerprintMatrix, basis: TomographicBasis, path,
                          metadata: dict | None = None) -> None:
    """Rows are observables k, columns are inputs j, both in Pauli-string order."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key, val in (metadata or {}).items():
            fh.write(f"# {key}: {json.dumps(val, sort_keys=True, default=str)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + list(basis.names))
        for name, row in zip(basis.names, y.entries):
            w.writerow([name] + [format(float(v), ".17g") for v in row])


def read_fingerprint_csv(path) -> FingerprintMatrix:
    with Path(path).open() as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return FingerprintMatrix(np.array([[float(v) for v in r[1:]] for r in rows[1:]]))

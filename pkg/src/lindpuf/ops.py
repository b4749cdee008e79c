"""Dense operator utilities, vectorization conventions and random streams.

Matrices are plain ``numpy`` arrays of shape ``(d, d)``. Vectorization is
column-major, so that ``vec(A @ X @ B.conj().T) == kron(B.conj(), A) @ vec(X)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HERMITIAN_ATOL = 1e-12

# Single-qubit operators. Basis ordering is |0>, |1>.
I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
# lowering operator |0><1|
SM = np.array([[0, 1], [0, 0]], dtype=complex)
SP = SM.conj().T
PAULIS = {"I": I2, "X": SX, "Y": SY, "Z": SZ}


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def kron(a, b) -> np.ndarray:
    """Kronecker product with block ordering a (x) b."""
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(*ops) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def embed(op, site: int, n_qubits: int) -> np.ndarray:
    """Place a single-qubit operator on ``site`` (0 = leftmost tensor factor)."""
    if not 0 <= site < n_qubits:
        raise DimensionError(f"site {site} outside chain of {n_qubits} qubits")
    factors = [I2] * n_qubits
    factors[site] = as_matrix(op)
    return kron_all(*factors)


def dag(a) -> np.ndarray:
    return np.asarray(a).conj().T


def is_hermitian(a, atol: float = HERMITIAN_ATOL) -> bool:
    a = np.asarray(a)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= atol)


def hermitian_part(a) -> np.ndarray:
    a = np.asarray(a)
    return 0.5 * (a + a.conj().T)


def singular_values(a) -> np.ndarray:
    return np.linalg.svd(as_matrix(a), compute_uv=False)


def trace_norm(a) -> float:
    """Schatten-1 norm: sum of singular values."""
    return float(np.sum(singular_values(a)))


def operator_norm(a) -> float:
    """Schatten-infinity norm: largest singular value."""
    s = singular_values(a)
    return float(s[0]) if s.size else 0.0


def vec(a) -> np.ndarray:
    """Column-major stacking of the columns of ``a``."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionError("unvec expects a 1-d vector")
    d = math.isqrt(v.size)
    if d * d != v.size or d == 0:
        raise DimensionError(f"length {v.size} is not a perfect square")
    return v.reshape((d, d), order="F")


def sandwich_superop(a, b) -> np.ndarray:
    """Matrix of X -> A X B^dagger acting on column-major vec(X)."""
    return np.kron(as_matrix(b).conj(), as_matrix(a))


def ket(bits: str) -> np.ndarray:
    """Computational-basis ket for a bitstring such as ``"101"``."""
    n = len(bits)
    v = np.zeros(2**n, dtype=complex)
    v[int(bits, 2) if n else 0] = 1.0
    return v


def projector(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


@dataclass
class RandomStream:
    """Deterministic random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's PCG64 seeded through ``SeedSequence(seed,
    spawn_key=(stream_id,))``, so each Monte Carlo sample index owns an
    independent, reproducible stream regardless of scheduling order.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        mask = (1 << 64) - 1
        ss = np.random.SeedSequence(self.seed & mask, spawn_key=(self.stream_id & mask,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RandomStream":
        return RandomStream(self.seed, stream_id)

    # thin delegation so a RandomStream can be used where a Generator is expected
    def __getattr__(self, name):
        if name == "generator":
            raise AttributeError(name)
        return getattr(self.generator, name)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_sphere(m: int, rng) -> np.ndarray:
    """Uniform point on the unit sphere S^{m-1} by Gaussian normalization."""
    if m < 1:
        raise ValueError("m must be >= 1")
    g = as_generator(rng)
    while True:
        x = g.standard_normal(m)
        nrm = np.linalg.norm(x)
        if nrm > 0.0:
            return x / nrm


def sample_product_cube(m: int, halfwidth: float, rng) -> np.ndarray:
    """Independent uniform coordinates on [-halfwidth, halfwidth]."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not halfwidth > 0:
        raise ValueError("halfwidth must be positive")
    return as_generator(rng).uniform(-halfwidth, halfwidth, size=m)


def random_pure_state(d: int, rng) -> np.ndarray:
    """Haar-random unit vector in C^d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    g = as_generator(rng)
    while True:
        z = g.standard_normal(d) + 1j * g.standard_normal(d)
        nrm = np.linalg.norm(z)
        if nrm > 0.0:
            return z / nrm


def random_unitary(d: int, rng) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    g = as_generator(rng)
    z = (g.standard_normal((d, d)) + 1j * g.standard_normal((d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_density_matrix(d: int, rng) -> np.ndarray:
    g = as_generator(rng)
    z = g.standard_normal((d, d)) + 1j * g.standard_normal((d, d))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real

"""First-order response of output distributions to the ensemble parameters.

The response coefficient of outcome x to direction j is the Duhamel integral

    a[j, x] = Tr( M_x  int_0^t  e^{(t-s) L_ref} G_j e^{s L_ref} (rho_in) ds ),

so that P_theta(x) = Q(x) + sum_j c_j(theta) a[j, x] + O(|c|^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .distributions import OutputDistribution, Povm, bitstrings, output_distribution
from .dynamics import ParametrizedFamily, Propagator, generator_apply, propagate

DEFAULT_NODES = 16


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "gauss-legendre"
    nodes: int = DEFAULT_NODES

    def __post_init__(self):
        if self.scheme != "gauss-legendre":
            raise ValueError("only Gauss-Legendre quadrature is supported")
        if self.nodes < 2:
            raise ValueError("need at least 2 quadrature nodes")

    def on_interval(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        return 0.5 * t * (x + 1.0), 0.5 * t * w


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    labels: tuple[str, ...]
    entries: np.ndarray  # shape (M, |X|)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def column_norms(self) -> np.ndarray:
        """||a^(x)||_2 for each outcome x."""
        return np.linalg.norm(self.entries, axis=0)

    def averaged_norm(self) -> float:
        return float(np.sum(self.column_norms()) / self.m)


def _duhamel_outputs(fam, t, povm, rho_in, quad, js, backend):
    """Integrated response distributions for the given direction indices."""
    s_nodes, weights = quad.on_interval(t)
    acc = np.zeros((len(js), len(povm)))
    ref = fam.l_ref
    ref_trivial = ref.is_zero
    for s, w in zip(s_nodes, weights):
        rho_s = rho_in if ref_trivial else propagate(Propagator(ref, s, backend), rho_in)
        back = None if ref_trivial else Propagator(ref, t - s, backend)
        for row, j in enumerate(js):
            g_j = fam.directions[j]
            if g_j.is_zero:
                continue
            x = generator_apply(g_j, rho_s)
            if back is not None:
                x = propagate(back, x)
            # Hermitize against roundoff before reading off probabilities
            x = 0.5 * (x + x.conj().T)
            acc[row] += w * output_distribution(x, povm).values
    return acc


def response_coefficient(fam: ParametrizedFamily, j: int, x: str, t: float, povm: Povm,
                         rho_in, quad: QuadratureSpec | None = None, backend: str = "auto") -> float:
    if not 0 <= j < fam.m:
        raise IndexError(f"direction index {j} outside 0..{fam.m - 1}")
    quad = quad or QuadratureSpec()
    row = _duhamel_outputs(fam, t, povm, rho_in, quad, [j], backend)[0]
    return float(row[povm.labels.index(x)])


def response_matrix(fam: ParametrizedFamily, t: float, povm: Povm, rho_in,
                    quad: QuadratureSpec | None = None, backend: str = "auto") -> ResponseMatrix:
    quad = quad or QuadratureSpec()
    entries = _duhamel_outputs(fam, t, povm, rho_in, quad, list(range(fam.m)), backend)
    return ResponseMatrix(povm.labels, entries)


def kappa(m: int) -> float:
    """sqrt(M) Gamma(M/2) / (sqrt(pi) Gamma((M+1)/2)), so that
    E|<theta, b>| = kappa(M) ||b||_2 / sqrt(M) for theta uniform on S^{M-1}."""
    if m < 2:
        raise ValueError("kappa is defined for M >= 2")
    return math.sqrt(m / math.pi) * math.exp(gammaln(m / 2) - gammaln((m + 1) / 2))


def sphere_abs_projection(m: int) -> float:
    """E|theta_1| on S^{M-1}; equals kappa(M)/sqrt(M), and 1 for M = 1."""
    if m == 1:
        return 1.0
    return kappa(m) / math.sqrt(m)


def m0(resp: ResponseMatrix) -> float:
    """First-order slope of the mean TV distance in delta."""
    if not np.any(resp.entries):
        return 0.0
    return kappa(resp.m) / (2 * resp.m) * float(np.sum(resp.column_norms()))


def toy_prediction(gamma: float, t: float, m: int, delta: float) -> float:
    """delta * (kappa_M / 2) * gamma t (1 + 1/sqrt(M)) for the amplitude-damping chain."""
    if gamma < 0 or t < 0 or delta < 0:
        raise ValueError("inputs must be nonnegative")
    return delta * kappa(m) / 2 * gamma * t * (1 + 1 / math.sqrt(m))


def limiting_slope(gamma: float = 1.0, t: float = 1.0) -> float:
    """M -> infinity slope gamma t / sqrt(2 pi)."""
    return gamma * t * math.sqrt(1 / (2 * math.pi))


def toy_response_closed_form(n_qubits: int, gamma: float, t: float) -> np.ndarray:
    """a[j, x] = t gamma (delta_{x, x_j^(0)} - delta_{x, 1^N})."""
    labels = bitstrings(n_qubits)
    a = np.zeros((n_qubits, len(labels)))
    ones = labels.index("1" * n_qubits)
    for j in range(n_qubits):
        flipped = "1" * j + "0" + "1" * (n_qubits - j - 1)
        a[j, labels.index(flipped)] = t * gamma
        a[j, ones] = -t * gamma
    return a


def amp_damp_analytic_distribution(theta, gamma: float, t: float, delta: float,
                                   m: int | None = None) -> OutputDistribution:
    """Factorized exact output of the amplitude-damping chain from |1...1>.

    p_j(1) = exp(-delta gamma theta_j t / sqrt(M)); the product over sites is
    taken in lexicographic bitstring order (site 0 is the leftmost bit).
    """
    theta = np.asarray(theta, dtype=float)
    m = theta.size if m is None else m
    if theta.size != m:
        raise ValueError("theta length must equal m")
    p1 = np.exp(-delta * gamma * theta * t / math.sqrt(m))
    probs = np.ones(1)
    for pj in p1:
        probs = np.kron(probs, np.array([1.0 - pj, pj]))
    return OutputDistribution(tuple(bitstrings(m)), probs)

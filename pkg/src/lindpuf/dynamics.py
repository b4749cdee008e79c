"""GKSL generators, linearly parametrized families and semigroup evolution."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .ops import (
    SM,
    DimensionError,
    as_generator,
    as_matrix,
    embed,
    is_hermitian,
    ket,
    operator_norm,
    projector,
    random_pure_state,
    sample_product_cube,
    sample_sphere,
    trace_norm,
    unvec,
    vec,
)

DEFAULT_TOLERANCE = 1e-10
SUPEROPERATOR_CAP = 4096


class NumericalError(RuntimeError):
    """Evolution did not converge; ``diagnostics`` holds the state at failure."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class JumpTerm:
    """Weighted dissipator ``weight * (L x L^dag - 1/2 {L^dag L, x})``."""

    operator: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "operator", as_matrix(self.operator))
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def dim(self) -> int:
        return self.operator.shape[0]

    @cached_property
    def ldl(self) -> np.ndarray:
        return self.operator.conj().T @ self.operator

    @cached_property
    def op_norm_sq(self) -> float:
        return operator_norm(self.operator) ** 2


def dissipator_apply(jump: JumpTerm, x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.shape != (jump.dim, jump.dim):
        raise DimensionError(f"operand shape {x.shape} does not match jump dim {jump.dim}")
    L = jump.operator
    return jump.weight * (L @ x @ L.conj().T - 0.5 * (jump.ldl @ x + x @ jump.ldl))


@dataclass(frozen=True, eq=False)
class Generator:
    """Lindbladian stored as a Hamiltonian plus a list of weighted jumps.

    Negative weights are allowed; ``signed_rates`` reports them.
    """

    dim: int
    hamiltonian: np.ndarray | None = None
    jumps: tuple[JumpTerm, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError("dim must be >= 1")
        if self.hamiltonian is not None:
            h = as_matrix(self.hamiltonian)
            if h.shape[0] != self.dim:
                raise DimensionError("hamiltonian dim mismatch")
            if not is_hermitian(h):
                raise ValueError("hamiltonian must be Hermitian")
            object.__setattr__(self, "hamiltonian", h)
        jumps = tuple(self.jumps)
        for j in jumps:
            if j.dim != self.dim:
                raise DimensionError(f"jump dim {j.dim} does not match generator dim {self.dim}")
        object.__setattr__(self, "jumps", jumps)

    @classmethod
    def zero(cls, dim: int) -> "Generator":
        return cls(dim)

    @property
    def signed_rates(self) -> bool:
        return any(j.weight < 0 for j in self.jumps)

    @property
    def is_zero(self) -> bool:
        h0 = self.hamiltonian is None or not np.any(self.hamiltonian)
        return h0 and all(j.weight == 0 for j in self.jumps)

    def norm_bound(self) -> float:
        """Certified bound on the 1->1 (and Frobenius) norm of the generator."""
        b = 0.0
        if self.hamiltonian is not None:
            b += 2.0 * operator_norm(self.hamiltonian)
        return b + sum(2.0 * abs(j.weight) * j.op_norm_sq for j in self.jumps)

    def scaled(self, c: float) -> "Generator":
        h = None if self.hamiltonian is None else c * self.hamiltonian
        return Generator(self.dim, h, tuple(JumpTerm(j.operator, c * j.weight) for j in self.jumps))

    def __add__(self, other: "Generator") -> "Generator":
        if other.dim != self.dim:
            raise DimensionError("generator dims differ")
        if self.hamiltonian is None:
            h = other.hamiltonian
        elif other.hamiltonian is None:
            h = self.hamiltonian
        else:
            h = self.hamiltonian + other.hamiltonian
        return Generator(self.dim, h, self.jumps + other.jumps)

    def __sub__(self, other: "Generator") -> "Generator":
        return self + other.scaled(-1.0)

    def __call__(self, x) -> np.ndarray:
        return generator_apply(self, x)


def generator_apply(g: Generator, x) -> np.ndarray:
    """-i[H, x] + sum of dissipators, without building the superoperator."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (g.dim, g.dim):
        raise DimensionError(f"operand shape {x.shape} does not match generator dim {g.dim}")
    out = np.zeros_like(x)
    if g.hamiltonian is not None:
        out += -1j * (g.hamiltonian @ x - x @ g.hamiltonian)
    for j in g.jumps:
        if j.weight != 0.0:
            out += dissipator_apply(j, x)
    return out


def materialize_superoperator(g: Generator, cap: int = SUPEROPERATOR_CAP) -> np.ndarray:
    """Dense d^2 x d^2 matrix acting on column-major vec."""
    d = g.dim
    if d * d > cap:
        raise DimensionError(f"superoperator dim {d * d} exceeds cap {cap}")
    eye = np.eye(d, dtype=complex)
    s = np.zeros((d * d, d * d), dtype=complex)
    if g.hamiltonian is not None:
        h = g.hamiltonian
        s += -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for j in g.jumps:
        if j.weight == 0.0:
            continue
        L = j.operator
        s += j.weight * (
            np.kron(L.conj(), L) - 0.5 * np.kron(eye, j.ldl) - 0.5 * np.kron(j.ldl.T, eye)
        )
    return s


@dataclass(frozen=True, eq=False)
class ParametrizedFamily:
    """L(theta) = L_ref + sum_j c_j(theta) G_j.

    In ``sphere`` mode ``c_j = delta * theta_j / sqrt(M)`` with ``theta`` on
    the unit sphere; in ``product`` mode ``c_j = theta_j`` with ``theta``
    drawn uniformly from the cube of the given ``halfwidth``.
    """

    l_ref: Generator
    directions: tuple[Generator, ...]
    delta: float
    mode: str = "sphere"
    halfwidth: float | None = None

    def __post_init__(self):
        dirs = tuple(self.directions)
        object.__setattr__(self, "directions", dirs)
        if not dirs:
            raise ValueError("at least one direction is required")
        for g in dirs:
            if g.dim != self.l_ref.dim:
                raise DimensionError("direction dim differs from l_ref")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.mode not in ("sphere", "product"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "product" and not (self.halfwidth and self.halfwidth > 0):
            raise ValueError("product mode needs a positive halfwidth")

    @property
    def m(self) -> int:
        return len(self.directions)

    @property
    def dim(self) -> int:
        return self.l_ref.dim

    @cached_property
    def c_g(self) -> float:
        """Analytic bound max_j ||G_j||_{1->1} (2 |w| ||L||^2 per jump)."""
        return max(g.norm_bound() for g in self.directions)

    def coefficients(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.m,):
            raise ValueError(f"theta must have length {self.m}, got shape {theta.shape}")
        if self.mode == "sphere":
            if abs(np.linalg.norm(theta) - 1.0) > 1e-9:
                raise ValueError("sphere mode requires a unit-norm theta")
            return self.delta * theta / math.sqrt(self.m)
        return theta

    def sample_theta(self, rng) -> np.ndarray:
        if self.mode == "sphere":
            return sample_sphere(self.m, rng)
        return sample_product_cube(self.m, self.halfwidth, rng)

    def with_delta(self, delta: float) -> "ParametrizedFamily":
        return ParametrizedFamily(self.l_ref, self.directions, delta, self.mode, self.halfwidth)


def assemble(fam: ParametrizedFamily, theta) -> Generator:
    coef = fam.coefficients(theta)
    out = fam.l_ref
    for c, g in zip(coef, fam.directions):
        if c != 0.0 and not g.is_zero:
            out = out + g.scaled(float(c))
    return out


@dataclass(frozen=True, eq=False)
class Propagator:
    """The channel e^{tL}; ``backend`` is ``dense``, ``matfree`` or ``auto``."""

    generator: Generator
    time: float
    backend: str = "auto"
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        if self.backend not in ("auto", "dense", "matfree"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "auto":
            d2 = self.generator.dim**2
            object.__setattr__(self, "backend", "dense" if d2 <= SUPEROPERATOR_CAP else "matfree")

    @property
    def dim(self) -> int:
        return self.generator.dim

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense transfer matrix e^{tS} on column-major vec."""
        s = materialize_superoperator(self.generator)
        return scipy.linalg.expm(self.time * s)

    def __call__(self, x) -> np.ndarray:
        return propagate(self, x)


def propagate(p: Propagator, x) -> np.ndarray:
    """Apply e^{tL} to an arbitrary operator (linear, no state checks)."""
    x = np.asarray(x, dtype=complex)
    if x.shape != (p.dim, p.dim):
        raise DimensionError(f"operand shape {x.shape} does not match dim {p.dim}")
    if p.time == 0.0 or p.generator.is_zero:
        return x.copy()
    if p.backend == "dense":
        return unvec(p.matrix @ vec(x))
    return _taylor_action(p.generator, p.time, x, p.tolerance)


def _taylor_action(g: Generator, t: float, x: np.ndarray, tol: float, max_terms: int = 60) -> np.ndarray:
    # slices: power of two so that t * ||L|| / slices <= 1/2
    b = g.norm_bound()
    slices = 1
    while t * b / slices > 0.5:
        slices *= 2
    h = t / slices
    slice_tol = tol / slices
    y = x
    for s in range(slices):
        acc = y.copy()
        term = y
        scale = max(np.linalg.norm(y), 1e-300)
        for k in range(1, max_terms + 1):
            term = generator_apply(g, term) * (h / k)
            acc += term
            # remaining tail bounded by a geometric series with ratio h*b/(k+1) <= 1/2
            if np.linalg.norm(term) * (h * b / (k + 1)) * 2.0 <= slice_tol * scale:
                break
        else:
            raise NumericalError(
                "truncated Taylor series did not converge",
                slice=s,
                slices=slices,
                terms=max_terms,
                last_term_norm=float(np.linalg.norm(term)),
                norm_bound=b,
            )
        y = acc
    return y


def evolve(p: Propagator, rho) -> np.ndarray:
    """Evolve a unit-trace Hermitian state through the semigroup."""
    rho = as_matrix(rho)
    if not is_hermitian(rho, 1e-10):
        raise ValueError("input state must be Hermitian")
    if abs(np.trace(rho) - 1.0) > 1e-10:
        raise ValueError("input state must have unit trace")
    return propagate(p, rho)


def one_to_one_norm_lb(
    g_map: Callable | np.ndarray,
    n_samples: int,
    rng,
    dim: int | None = None,
    extra_inputs: Sequence[np.ndarray] = (),
) -> float:
    """Lower bound on ||g_map||_{1->1} over random rank-one inputs |psi><phi|.

    ``g_map`` is a callable on d x d matrices or a d^2 x d^2 superoperator.
    ``extra_inputs`` are evaluated first (each scaled to unit trace norm).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not callable(g_map):
        mat = np.asarray(g_map)
        dim = math.isqrt(mat.shape[0])
        fn = lambda x: unvec(mat @ vec(x))  # noqa: E731
    else:
        fn = g_map
        if dim is None:
            raise ValueError("dim is required for a callable map")
    best = 0.0
    for x in extra_inputs:
        x = as_matrix(x)
        nrm = trace_norm(x)
        if nrm > 0:
            best = max(best, trace_norm(fn(x / nrm)))
    gen = as_generator(rng)
    for _ in range(n_samples):
        psi = random_pure_state(dim, gen)
        phi = random_pure_state(dim, gen)
        best = max(best, trace_norm(fn(np.outer(psi, phi.conj()))))
    return best


# ---------------------------------------------------------------------------
# the random local amplitude-damping chain


def all_ones_state(n_qubits: int) -> np.ndarray:
    return projector(ket("1" * n_qubits))


def amplitude_damping_family(
    n_qubits: int,
    delta: float,
    gamma: float = 1.0,
    observed: Sequence[int] | None = None,
) -> ParametrizedFamily:
    """Toy model: L_ref = 0, one gamma-weighted sigma^- dissipator per site.

    With ``observed`` set, the Hilbert space is restricted to those sites;
    directions of the other sites are zero generators. Because all sites
    decouple and every dissipator is trace preserving, this reproduces the
    exact marginal dynamics of the observed sites for any M = n_qubits.
    """
    sites = list(range(n_qubits)) if observed is None else list(observed)
    k = len(sites)
    if k < 1 or len(set(sites)) != k or not all(0 <= s < n_qubits for s in sites):
        raise ValueError("observed must be distinct sites of the chain")
    d = 2**k
    directions = []
    for j in range(n_qubits):
        if j in sites:
            op = embed(SM, sites.index(j), k)
            directions.append(Generator(d, None, (JumpTerm(op, gamma),)))
        else:
            directions.append(Generator.zero(d))
    return ParametrizedFamily(Generator.zero(d), tuple(directions), delta, "sphere")


def random_generator(
    dim: int,
    n_jumps: int,
    rng,
    rate_scale: float = 1.0,
    hamiltonian_scale: float = 1.0,
) -> Generator:
    """GKSL generator with Gaussian H and positive-rate random jumps."""
    gen = as_generator(rng)
    a = gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))
    h = hamiltonian_scale * 0.5 * (a + a.conj().T) / math.sqrt(dim)
    jumps = []
    for _ in range(n_jumps):
        L = (gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))) / math.sqrt(2 * dim)
        jumps.append(JumpTerm(L, rate_scale * gen.uniform(0.2, 1.0)))
    return Generator(dim, h, tuple(jumps))

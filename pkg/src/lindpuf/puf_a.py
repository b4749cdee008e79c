"""Distribution-level Lindbladian PUF with Hadamard (parity) challenges.

The verifier enrolls an estimate of the device's output distribution, then
issues random bitstrings BIT; the prover must return E_P[phi_BIT] with
phi_BIT(x) = (-1)^<BIT, h(x)> for a public injective encoding h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distributions import OutputDistribution
from .oracles import StatOracle
from .ops import as_generator

C0 = 2.0


class EncodingError(ValueError):
    pass


def f2_rank(codes: Sequence[int]) -> int:
    """Rank over GF(2) of integers viewed as bit vectors."""
    basis: list[int] = []
    for c in codes:
        for b in basis:
            c = min(c, c ^ b)
        if c:
            basis.append(c)
    return len(basis)


@dataclass(frozen=True)
class Encoding:
    """Injective map from outcome labels to L-bit codes (stored as ints)."""

    labels: tuple[str, ...]
    l: int
    codes: tuple[int, ...]
    f2_rank: int = field(init=False)

    def __post_init__(self):
        if len(self.codes) != len(self.labels):
            raise EncodingError("one code per label is required")
        if any(not 0 <= c < 2**self.l for c in self.codes):
            raise EncodingError("codes must fit in L bits")
        if len(set(self.codes)) != len(self.codes):
            raise EncodingError("encoding is not injective")
        rank = f2_rank(self.codes)
        if rank != self.l:
            raise EncodingError(f"encoding has GF(2) rank {rank}, expected {self.l}")
        object.__setattr__(self, "f2_rank", rank)

    @property
    def size(self) -> int:
        return 2**self.l


def default_encoding(labels: Sequence[str], l: int | None = None) -> Encoding:
    """Index-binary encoding, or unit vectors first when L exceeds log2|X|.

    For L = ceil(log2|X|) the index codes contain every unit vector, hence
    have full rank. For larger L the first L labels get the unit vectors and
    the rest take the smallest unused codes.
    """
    n = len(labels)
    lmin = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    l = lmin if l is None else l
    if l < lmin:
        raise EncodingError(f"L={l} cannot encode {n} outcomes injectively")
    if l > n:
        raise EncodingError(f"L={l} exceeds |X|={n}; full rank is impossible")
    if l == lmin:
        codes = list(range(n))
    else:
        units = [1 << k for k in range(l)]
        rest = (c for c in range(2**l) if c not in set(units))
        codes = units + [next(rest) for _ in range(n - l)]
    return Encoding(tuple(labels), l, tuple(codes))


def _bits_to_int(bits, l: int) -> int:
    if isinstance(bits, (int, np.integer)):
        b = int(bits)
        if not 0 <= b < 2**l:
            raise ValueError(f"challenge {b} outside {{0,1}}^{l}")
        return b
    bits = list(bits)
    if len(bits) != l:
        raise ValueError(f"challenge has {len(bits)} bits, expected {l}")
    return int("".join(str(int(b)) for b in bits) or "0", 2)


def _parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    p = np.zeros_like(x)
    while np.any(x):
        p ^= x & 1
        x >>= 1
    return p


def phi_bit(bits, enc: Encoding) -> np.ndarray:
    """phi_BIT(x) = (-1)^<BIT, h(x)> over the encoded outcome set."""
    b = _bits_to_int(bits, enc.l)
    par = _parity(np.array(enc.codes, dtype=np.int64) & b)
    return 1.0 - 2.0 * par


def wht(values, inverse: bool = False) -> np.ndarray:
    """Fast Walsh-Hadamard transform; the inverse carries the 2^-L factor."""
    a = np.array(values, dtype=float)
    n = a.size
    if n < 1 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    h = 1
    while h < n:
        a = a.reshape(-1, 2, h)
        a = np.stack((a[:, 0] + a[:, 1], a[:, 0] - a[:, 1]), axis=1)
        h *= 2
    a = a.reshape(n)
    return a / n if inverse else a


def extend(values, enc: Encoding) -> np.ndarray:
    """Embed a vector over X into {0,1}^L, zero off the code image."""
    out = np.zeros(enc.size)
    out[list(enc.codes)] = values
    return out


def hadamard_spectrum(p: OutputDistribution, enc: Encoding) -> np.ndarray:
    """p[phi_BIT] for every BIT, indexed by the challenge integer."""
    return wht(extend(p.values, enc))


def parseval_check(p: OutputDistribution, q: OutputDistribution, enc: Encoding) -> tuple[float, float]:
    diff = extend(p.values - q.values, enc)
    lhs = float(np.sum(wht(diff) ** 2) / enc.size)
    rhs = float(np.sum((p.values - q.values) ** 2))
    return lhs, rhs


def project_to_simplex(v, labels: Sequence[str] | None = None) -> OutputDistribution:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    w = np.maximum(v - theta, 0.0)
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(v.size))
    return OutputDistribution(labels, w)


# ---------------------------------------------------------------------------
# enrollment and authentication


@dataclass(frozen=True, eq=False)
class ProbabilityFingerprint:
    labels: tuple[str, ...]
    values: np.ndarray
    eta: float
    delta_puf: float
    shots_used: int

    def as_distribution(self) -> OutputDistribution:
        return OutputDistribution(self.labels, self.values)


def enrollment_shots(card_x: int, eta: float, delta_puf: float) -> int:
    """T = ceil(ln(2|X|/delta) / (2 eta^2)) from Hoeffding plus a union bound."""
    return math.ceil(math.log(2 * card_x / delta_puf) / (2 * eta**2))


def enroll(device, eta: float, delta_puf: float, rng=None, labels: Sequence[str] | None = None
           ) -> ProbabilityFingerprint:
    """Estimate the device distribution.

    ``device`` is an ``OutputDistribution`` (copied exactly, eta = 0) or a
    callable ``sampler(shots, rng) -> outcome indices`` used with the
    Hoeffding shot count; ``labels`` must then be supplied.
    """
    if isinstance(device, OutputDistribution):
        return ProbabilityFingerprint(device.labels, device.values.copy(), 0.0, delta_puf, 0)
    if eta <= 0:
        raise ValueError("eta must be positive")
    if labels is None:
        raise ValueError("labels are required for a sampling device")
    shots = enrollment_shots(len(labels), eta, delta_puf)
    idx = np.asarray(device(shots, as_generator(rng)))
    freq = np.bincount(idx, minlength=len(labels)) / shots
    return ProbabilityFingerprint(tuple(labels), freq, eta, delta_puf, shots)


def sampler_for(dist: OutputDistribution) -> Callable:
    """Sample-access callback for a physical distribution."""
    if not dist.is_physical:
        raise ValueError("cannot sample from a signed distribution")
    p = np.clip(dist.values, 0.0, None)
    p = p / p.sum()
    return lambda shots, rng: as_generator(rng).choice(p.size, size=shots, p=p)


@dataclass(frozen=True)
class Round:
    bits: int
    u: float
    v: float
    accepted: bool


@dataclass(frozen=True)
class Transcript:
    rounds: tuple[Round, ...]
    verdict: bool
    tau: float
    c0: float
    n_chal: int
    l: int

    def to_log(self) -> str:
        """One line per round: BIT in hex, u, v, accept flag."""
        width = max(1, math.ceil(self.l / 4))
        return "".join(
            f"{r.bits:0{width}x} {r.u:.17g} {r.v:.17g} {int(r.accepted)}\n" for r in self.rounds
        )


def run_authentication(fingerprint: ProbabilityFingerprint, responder: Callable[[int], float],
                       enc: Encoding, tau: float, n_chal: int, rng, c0: float = C0) -> Transcript:
    if fingerprint.labels != enc.labels:
        raise ValueError("fingerprint and encoding use different outcome sets")
    gen = as_generator(rng)
    spectrum = wht(extend(fingerprint.values, enc))
    rounds = []
    for _ in range(n_chal):
        b = int(gen.integers(enc.size))
        u = float(spectrum[b])
        try:
            v = float(responder(b))
            ok = bool(abs(v - u) <= c0 * tau)
        except Exception:  # responder failure counts as a rejected round
            v, ok = math.nan, False
        rounds.append(Round(b, u, v, ok))
    return Transcript(tuple(rounds), all(r.accepted for r in rounds), tau, c0, n_chal, enc.l)


# ---------------------------------------------------------------------------
# provers and adversaries


def honest_prover(oracle: StatOracle, enc: Encoding) -> Callable[[int], float]:
    """Answers each challenge with one SQ query."""
    return lambda bits: oracle.query(phi_bit(bits, enc))


class TableLookupAdversary:
    """Caches q random challenges during the attack phase; guesses on a miss.

    ``miss`` is ``"zero"`` (midpoint of [-1, 1]) or ``"cache_mean"``.
    """

    def __init__(self, oracle: StatOracle, enc: Encoding, q: int, rng, miss: str = "zero"):
        if q < 0:
            raise ValueError("q must be nonnegative")
        if miss not in ("zero", "cache_mean"):
            raise ValueError("miss must be 'zero' or 'cache_mean'")
        gen = as_generator(rng)
        q = min(q, enc.size)
        chosen = gen.choice(enc.size, size=q, replace=False) if q else []
        self.table = {int(b): oracle.query(phi_bit(int(b), enc)) for b in chosen}
        self.miss_value = 0.0
        if miss == "cache_mean" and self.table:
            self.miss_value = float(np.mean(list(self.table.values())))

    def __call__(self, bits: int) -> float:
        return self.table.get(int(bits), self.miss_value)


def table_lookup_adversary(oracle: StatOracle, enc: Encoding, q: int, rng, miss: str = "zero"):
    return TableLookupAdversary(oracle, enc, q, rng, miss)


def reconstruction_adversary(oracle: StatOracle, enc: Encoding
                             ) -> tuple[Callable[[int], float], OutputDistribution]:
    """Query every challenge, invert the transform and project to the simplex."""
    w = np.array([oracle.query(phi_bit(b, enc)) for b in range(enc.size)])
    approx = wht(w, inverse=True)[list(enc.codes)]
    d = project_to_simplex(approx, enc.labels)
    spectrum = hadamard_spectrum(d, enc)
    return (lambda bits: float(spectrum[int(bits)])), d


def defect_rate(responder: Callable[[int], float], target: OutputDistribution, enc: Encoding,
                threshold: float) -> float:
    """Fraction of challenges where |w(BIT) - P[phi_BIT]| > threshold."""
    spec = hadamard_spectrum(target, enc)
    w = np.array([responder(b) for b in range(enc.size)])
    return float(np.mean(np.abs(w - spec) > threshold))


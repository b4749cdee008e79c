"""Monte Carlo sweeps, concentration estimates, bound evaluators and CSV output.

Every sample draws its randomness from ``RandomStream(seed, stream_id)``
with a stream id derived from the sample's coordinates (system size, grid
index, sample index), so results do not depend on thread scheduling.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .distributions import (
    OutputDistribution,
    Povm,
    computational_povm,
    output_distribution,
    tv_distance,
)
from .dynamics import (
    ParametrizedFamily,
    Propagator,
    all_ones_state,
    amplitude_damping_family,
    assemble,
    evolve,
    propagate,
)
from .ops import RandomStream

REFERENCES = ("ref_dynamics", "ensemble_mean")
_PREPASS_BIT = 1 << 62


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """A parametrized family together with input state, measurement and time."""

    family: ParametrizedFamily
    rho_in: np.ndarray
    povm: Povm
    t: float = 1.0
    backend: str = "auto"

    @property
    def m(self) -> int:
        return self.family.m

    def channel(self, theta) -> Propagator:
        return Propagator(assemble(self.family, theta), self.t, self.backend)

    def distribution(self, theta) -> OutputDistribution:
        return output_distribution(evolve(self.channel(theta), self.rho_in), self.povm)

    def reference_distribution(self) -> OutputDistribution:
        ref = Propagator(self.family.l_ref, self.t, self.backend)
        return output_distribution(evolve(ref, self.rho_in), self.povm)

    def with_delta(self, delta: float) -> "EnsembleModel":
        return dataclasses.replace(self, family=self.family.with_delta(delta))


def toy_model(n_qubits: int, delta: float, gamma: float = 1.0, t: float = 1.0,
              observed: Sequence[int] | None = None, backend: str = "matfree") -> EnsembleModel:
    """Random local amplitude-damping chain measured in the computational basis.

    With ``observed`` the model tracks only the marginal on those sites
    while keeping the parameter dimension M = n_qubits.
    """
    fam = amplitude_damping_family(n_qubits, delta, gamma, observed)
    k = n_qubits if observed is None else len(observed)
    return EnsembleModel(fam, all_ones_state(k), computational_povm(k), t, backend)


def stream_id(*coords: int) -> int:
    """Pack small nonnegative coordinates into one 62-bit stream id (20 bits each)."""
    sid = 0
    for c in coords:
        if not 0 <= c < (1 << 20):
            raise ValueError("stream coordinate out of range")
        sid = (sid << 20) | c
    return sid


def map_samples(fn: Callable[[RandomStream], object], seed: int, ids: Sequence[int],
                threads: int = 1) -> list:
    """Evaluate ``fn`` on one stream per id, returning results in id order."""
    streams = [RandomStream(seed, i) for i in ids]
    if threads <= 1:
        return [fn(s) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, streams))


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass(frozen=True)
class ProbabilityEstimate:
    estimate: float
    low: float
    high: float
    hits: int
    n_samples: int


def proportion_estimate(hits: int, n: int) -> ProbabilityEstimate:
    lo, hi = wilson_interval(hits, n)
    return ProbabilityEstimate(hits / n, lo, hi, hits, n)


def nonincreasing_within_intervals(estimates: Sequence[ProbabilityEstimate]) -> bool:
    """True unless some later estimate is significantly above an earlier one."""
    return all(b.low <= a.high for a, b in zip(estimates, estimates[1:]))


def ensemble_mean_distribution(model: EnsembleModel, n_samples: int, seed: int,
                               threads: int = 1) -> OutputDistribution:
    ids = [_PREPASS_BIT | i for i in range(n_samples)]
    vals = map_samples(lambda s: model.distribution(model.family.sample_theta(s)).values,
                       seed, ids, threads)
    mean = np.array([math.fsum(col) for col in zip(*vals)]) / n_samples
    return OutputDistribution(model.povm.labels, mean)


def reference_for(model: EnsembleModel, reference: str, seed: int, n_prepass: int,
                  threads: int = 1) -> OutputDistribution:
    if reference == "ref_dynamics":
        return model.reference_distribution()
    if reference == "ensemble_mean":
        return ensemble_mean_distribution(model, n_prepass, seed, threads)
    raise ValueError(f"reference must be one of {REFERENCES}")


# ---------------------------------------------------------------------------
# mean TV sweeps


@dataclass(frozen=True)
class SweepRow:
    delta: float
    n_qubits: int
    n_samples: int
    mean_tv: float
    stderr: float
    frac_unphysical: float
    seed: int
    error: str = ""


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float


def _mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def mean_tv_point(model: EnsembleModel, n_samples: int, seed: int, row_key: tuple[int, ...],
                  q: OutputDistribution, threads: int = 1) -> tuple[float, float, float]:
    def one(stream):
        p = model.distribution(model.family.sample_theta(stream))
        return tv_distance(p, q), not p.is_physical

    ids = [stream_id(*row_key, i) for i in range(n_samples)]
    out = map_samples(one, seed, ids, threads)
    mean, se = _mean_and_stderr([o[0] for o in out])
    return mean, se, sum(o[1] for o in out) / n_samples


def mean_tv_sweep(model_builder: Callable[[int, float], EnsembleModel], n_list: Iterable[int],
                  delta_grid: Sequence[float], n_samples: int, reference: str = "ref_dynamics",
                  seed: int = 0, threads: int = 1, n_prepass: int = 400) -> list[SweepRow]:
    """Monte Carlo estimate of E_theta TV(P_theta, Q) over (N, delta).

    Evolution failures are recorded in the row's ``error`` field.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    rows = []
    for n in n_list:
        for k, delta in enumerate(delta_grid):
            model = model_builder(n, float(delta))
            try:
                q = reference_for(model, reference, seed, n_prepass, threads)
                mean, se, frac = mean_tv_point(model, n_samples, seed, (n, k), q, threads)
                rows.append(SweepRow(float(delta), n, n_samples, mean, se, frac, seed))
            except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
                rows.append(SweepRow(float(delta), n, n_samples, math.nan, math.nan, math.nan,
                                     seed, f"{type(exc).__name__}: {exc}"))
    return rows


def fit_linear(rows_or_x, y=None) -> FitResult:
    """Ordinary least squares of mean_tv on delta (or of ``y`` on ``x``)."""
    if y is None:
        good = [r for r in rows_or_x if not r.error]
        x = np.array([r.delta for r in good])
        y = np.array([r.mean_tv for r in good])
    else:
        x, y = np.asarray(rows_or_x, dtype=float), np.asarray(y, dtype=float)
    if np.unique(x).size < 2:
        raise ValueError("linear fit needs at least two distinct delta values")
    if x.size == 2:
        slope = (y[1] - y[0]) / (x[1] - x[0])
        return FitResult(float(slope), float(y[0] - slope * x[0]), 0.0, 1.0)
    res = stats.linregress(x, y)
    r2 = float(res.rvalue**2) if np.isfinite(res.rvalue) else 1.0
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), min(max(r2, 0.0), 1.0))


def eps_mean_curve(model_builder: Callable[[int, float], EnsembleModel], delta: float,
                   n_list: Sequence[int], n_max: int, n_samples: int, seed: int = 0,
                   reference: str = "ref_dynamics", threads: int = 1) -> list[tuple[int, float]]:
    """Finite-size deviation |m(delta; N) - m(delta; N_max)| for each N."""
    sizes = sorted(set(n_list) | {n_max})
    rows = mean_tv_sweep(model_builder, sizes, [delta], n_samples, reference, seed, threads)
    means = {r.n_qubits: r.mean_tv for r in rows}
    return [(n, abs(means[n] - means[n_max])) for n in n_list]


# ---------------------------------------------------------------------------
# concentration experiments


def frac_estimate(model: EnsembleModel, phi, tau: float, n_samples: int,
                  reference: str = "ref_dynamics", seed: int = 0, threads: int = 1,
                  n_prepass: int = 400) -> ProbabilityEstimate:
    """Fraction of theta with |P_theta[phi] - Q[phi]| >= tau, with Wilson interval."""
    if n_samples < 10:
        raise ValueError("n_samples must be >= 10")
    phi = np.asarray(phi, dtype=float)
    q = reference_for(model, reference, seed, n_prepass, threads)
    q_phi = float(phi @ q.values)

    def one(stream):
        p = model.distribution(model.family.sample_theta(stream))
        return abs(float(phi @ p.values) - q_phi) >= tau

    hits = sum(map_samples(one, seed, range(n_samples), threads))
    return proportion_estimate(hits, n_samples)


def far_from_D(model: EnsembleModel, d_ref: OutputDistribution, eps: float, n_samples: int,
               seed: int = 0, threads: int = 1) -> ProbabilityEstimate:
    """Empirical Pr_theta[ TV(P_theta, d_ref) >= eps ]."""
    hits = sum(map_samples(
        lambda s: tv_distance(model.distribution(model.family.sample_theta(s)), d_ref) >= eps,
        seed, range(n_samples), threads))
    return proportion_estimate(hits, n_samples)


def qpstat_concentration(model: EnsembleModel, sigma, obs, tau: float, n_samples: int,
                         seed: int = 0, threads: int = 1) -> ProbabilityEstimate:
    """Fraction of theta whose Tr[O E_theta(sigma)] deviates from the sample mean by >= tau."""
    sigma = np.asarray(sigma, dtype=complex)
    obs = np.asarray(obs, dtype=complex)

    def one(stream):
        out = propagate(model.channel(model.family.sample_theta(stream)), sigma)
        return float(np.real(np.trace(obs @ out)))

    vals = map_samples(one, seed, range(n_samples), threads)
    mean = math.fsum(vals) / n_samples
    hits = sum(abs(v - mean) >= tau for v in vals)
    return proportion_estimate(hits, n_samples)


# ---------------------------------------------------------------------------
# bound evaluators


def levy_bound(m: int, tau: float, lipschitz: float, c_par: float) -> float:
    """2 exp(-c_par M tau^2 / L^2)."""
    if lipschitz <= 0 or c_par <= 0 or m < 1:
        raise ValueError("need M >= 1, L > 0 and c_par > 0")
    return 2.0 * math.exp(-c_par * m * tau**2 / lipschitz**2)


def mcdiarmid_bound(m: int, tau: float, delta: float, l1: float, c_prod: float = 0.5) -> float:
    """2 exp(-c_prod tau^2 / (M delta^2 L1^2)); c_prod = 1/2 is McDiarmid's constant."""
    if m < 1 or delta <= 0 or l1 <= 0:
        raise ValueError("need M >= 1, delta > 0 and L1 > 0")
    return 2.0 * math.exp(-c_prod * tau**2 / (m * delta**2 * l1**2))


def delta_had(alpha0: float, n_chal: int) -> float:
    """Per-round failure mass 1 - alpha0^(1/N_chal)."""
    if not 0 < alpha0 <= 1 or n_chal < 1:
        raise ValueError("need 0 < alpha0 <= 1 and n_chal >= 1")
    return 1.0 - alpha0 ** (1.0 / n_chal)


def p0(alpha_auth: float) -> float:
    """1 / (3 - 2 alpha_auth)."""
    if not 0.5 < alpha_auth <= 1:
        raise ValueError("alpha_auth must lie in (1/2, 1]")
    return 1.0 / (3.0 - 2.0 * alpha_auth)


def kappa_had(c0: float, tau: float, delta_had_value: float) -> float:
    """sqrt((C0 + 1)^2 tau^2 + 4 delta_Had)."""
    if tau < 0 or delta_had_value < 0:
        raise ValueError("tau and delta_had must be nonnegative")
    return math.sqrt((c0 + 1) ** 2 * tau**2 + 4 * delta_had_value)


def eps_sq(card_x: int, kappa_value: float) -> tuple[float, float]:
    """(sqrt|X| kappa, 1/2 sqrt|X| kappa): the conservative and the tight variant."""
    if card_x < 1 or kappa_value < 0:
        raise ValueError("need |X| >= 1 and kappa >= 0")
    full = math.sqrt(card_x) * kappa_value
    return full, 0.5 * full


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def csv_emit(rows: Sequence, path, metadata: dict | None = None,
             fieldnames: Sequence[str] | None = None) -> None:
    """Write ``#``-prefixed metadata lines, a header row, then data rows.

    ``rows`` are dataclass instances or dicts; floats use 17 significant digits.
    """
    meta = {"artifact_version": __version__, **(metadata or {})}
    dict_rows = [dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r) for r in rows]
    if fieldnames is None:
        fieldnames = list(dict_rows[0]) if dict_rows else []
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}: {json.dumps(v, sort_keys=True, default=str)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for r in dict_rows:
            w.writerow([_fmt(r[f]) for f in fieldnames])


def csv_read(path) -> tuple[dict, list[dict]]:
    """Parse a file written by ``csv_emit``; numeric cells become floats."""
    meta, lines = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(": ")
                meta[key] = json.loads(val)
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    rows = []
    for r in reader:
        conv = {}
        for k, v in r.items():
            try:
                conv[k] = float(v)
            except ValueError:
                conv[k] = v
        rows.append(conv)
    return meta, rows


def data_section(path) -> str:
    """File contents with metadata comment lines removed."""
    with Path(path).open() as fh:
        return "".join(line for line in fh if not line.startswith("#"))

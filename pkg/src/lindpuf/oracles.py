"""Statistical-query and QPStat oracles with tolerance modes and query budgets."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import OutputDistribution, check_test_function, expectation
from .dynamics import Propagator, propagate
from .ops import as_generator, as_matrix, is_hermitian, operator_norm, trace_norm

NORM_SLACK = 1e-10


class BudgetExhausted(RuntimeError):
    """The oracle's query budget has been used up."""


class QueryRejected(ValueError):
    """A query violated the oracle's input contract."""


def hoeffding_shots(tau: float, delta: float, value_range: float = 2.0) -> int:
    """Shots so that a sample mean of values in an interval of width
    ``value_range`` deviates by more than ``tau`` with probability <= ``delta``."""
    if tau <= 0 or not 0 < delta < 1:
        raise ValueError("need tau > 0 and 0 < delta < 1")
    return math.ceil(value_range**2 * math.log(2.0 / delta) / (2.0 * tau**2))


def hoeffding_failure(shots: int, tau: float, value_range: float = 2.0) -> float:
    return min(1.0, 2.0 * math.exp(-2.0 * shots * tau**2 / value_range**2))


@dataclass(frozen=True)
class NoiseMode:
    """How an oracle perturbs the true expectation.

    ``exact``       returns the truth;
    ``uniform``     adds noise uniform on [-tau, tau];
    ``empirical``   returns a shot average over ``shots`` samples;
    ``adversarial`` asks ``callback(truth, tau, query)`` and clamps to truth +- tau.
    """

    kind: str = "exact"
    shots: int | None = None
    callback: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "uniform", "empirical", "adversarial"):
            raise ValueError(f"unknown noise mode {self.kind!r}")
        if self.kind == "empirical" and not (self.shots and self.shots > 0):
            raise ValueError("empirical mode needs a positive shot count")
        if self.kind == "adversarial" and self.callback is None:
            raise ValueError("adversarial mode needs a callback")

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def uniform(cls):
        return cls("uniform")

    @classmethod
    def empirical(cls, shots: int):
        return cls("empirical", shots=int(shots))

    @classmethod
    def adversarial(cls, callback: Callable):
        return cls("adversarial", callback=callback)


class _BaseOracle:
    def __init__(self, tau: float, mode: NoiseMode | None, budget: int | None, rng):
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        self.tau = float(tau)
        self.mode = mode or NoiseMode.exact()
        self.budget = budget
        self.count = 0
        self._rng = as_generator(rng if rng is not None else 0)
        self._lock = threading.Lock()

    @property
    def failure_probability(self) -> float:
        """Per-query probability that an answer misses the +-tau window."""
        if self.mode.kind != "empirical":
            return 0.0
        if self.tau == 0:
            return 1.0
        return hoeffding_failure(self.mode.shots, self.tau)

    def reset_budget(self, q: int | None) -> None:
        if q is not None and q < 0:
            raise ValueError("budget must be nonnegative")
        with self._lock:
            self.budget = q
            self.count = 0

    def _charge(self) -> None:
        with self._lock:
            if self.budget is not None and self.count >= self.budget:
                raise BudgetExhausted(f"query budget of {self.budget} exhausted")
            self.count += 1

    def _perturb(self, truth: float, query) -> float:
        kind = self.mode.kind
        if kind == "exact":
            return truth
        if kind == "uniform":
            return truth + self._rng.uniform(-self.tau, self.tau)
        if kind == "adversarial":
            v = float(self.mode.callback(truth, self.tau, query))
            return min(max(v, truth - self.tau), truth + self.tau)
        raise AssertionError(kind)


def reset_budget(oracle: _BaseOracle, q: int | None) -> None:
    oracle.reset_budget(q)


class StatOracle(_BaseOracle):
    """Stat_tau(P): answers E_P[phi] to additive tolerance tau."""

    def __init__(self, dist: OutputDistribution, tau: float, mode: NoiseMode | None = None,
                 budget: int | None = None, rng=None):
        super().__init__(tau, mode, budget, rng)
        self._dist = dist
        if self.mode.kind == "empirical" and not dist.is_physical:
            raise ValueError("empirical mode needs a physical distribution")

    @property
    def labels(self) -> tuple[str, ...]:
        return self._dist.labels

    def query(self, phi) -> float:
        phi = check_test_function(phi, len(self._dist))
        self._charge()
        truth = expectation(self._dist, phi)
        if self.mode.kind == "empirical":
            p = np.clip(self._dist.values, 0.0, None)
            p = p / p.sum()
            idx = self._rng.choice(p.size, size=self.mode.shots, p=p)
            return float(np.mean(phi[idx]))
        return self._perturb(truth, phi)


def stat_query(o: StatOracle, phi) -> float:
    return o.query(phi)


class QPStatOracle(_BaseOracle):
    """QPStat_tau(E): answers Tr[O E(sigma)] to tolerance tau.

    With ``extended=True`` any Hermitian sigma with trace norm <= 1 is allowed;
    otherwise sigma must be a density matrix.
    """

    def __init__(self, channel: Propagator, tau: float, mode: NoiseMode | None = None,
                 budget: int | None = None, extended: bool = False, rng=None):
        super().__init__(tau, mode, budget, rng)
        self._channel = channel
        self.extended = extended

    @property
    def dim(self) -> int:
        return self._channel.dim

    def _validate(self, sigma, obs):
        sigma, obs = as_matrix(sigma), as_matrix(obs)
        if sigma.shape[0] != self.dim or obs.shape[0] != self.dim:
            raise QueryRejected("operand dims do not match the channel")
        if not is_hermitian(sigma, 1e-10) or not is_hermitian(obs, 1e-10):
            raise QueryRejected("sigma and O must be Hermitian")
        if operator_norm(obs) > 1 + NORM_SLACK:
            raise QueryRejected("observable operator norm exceeds 1")
        if self.extended:
            if trace_norm(sigma) > 1 + NORM_SLACK:
                raise QueryRejected("input trace norm exceeds 1")
        else:
            if np.linalg.eigvalsh(sigma)[0] < -NORM_SLACK or abs(np.trace(sigma) - 1) > NORM_SLACK:
                raise QueryRejected("input must be a density matrix for a non-extended oracle")
        return sigma, obs

    def query(self, sigma, obs) -> float:
        sigma, obs = self._validate(sigma, obs)
        self._charge()
        if self.mode.kind == "empirical":
            return self._shot_estimate(sigma, obs)
        truth = float(np.real(np.trace(obs @ propagate(self._channel, sigma))))
        return self._perturb(truth, (sigma, obs))

    def _shot_estimate(self, sigma, obs) -> float:
        # split sigma into weighted positive and negative density matrices
        ev, vecs = np.linalg.eigh(sigma)
        ob_ev, ob_vecs = np.linalg.eigh(obs)
        total = 0.0
        for sign in (1.0, -1.0):
            w = np.clip(sign * ev, 0.0, None)
            weight = w.sum()
            if weight <= 0:
                continue
            part = (vecs * (w / weight)) @ vecs.conj().T
            out = propagate(self._channel, part)
            probs = np.real(np.einsum("ia,ij,ja->a", ob_vecs.conj(), out, ob_vecs))
            probs = np.clip(probs, 0.0, None)
            probs = probs / probs.sum()
            idx = self._rng.choice(probs.size, size=self.mode.shots, p=probs)
            total += sign * weight * float(np.mean(ob_ev[idx]))
        return total


def qpstat_query(o: QPStatOracle, sigma, obs) -> float:
    return o.query(sigma, obs)

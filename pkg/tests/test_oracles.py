import math
import threading

import numpy as np
import pytest

from lindpuf.distributions import OutputDistribution, uniform_distribution
from lindpuf.dynamics import Generator, JumpTerm, Propagator
from lindpuf.oracles import (
    BudgetExhausted, NoiseMode, QPStatOracle, QueryRejected, StatOracle, hoeffding_shots,
    qpstat_query, reset_budget, stat_query,
)
from lindpuf.ops import SM, SX, SZ, ket, projector


def _ident():
    return Propagator(Generator.zero(2), 1.0)


def _damp(c, t):
    return Propagator(Generator(2, None, (JumpTerm(SM, c),)), t)


def test_stat_exact():
    o = StatOracle(uniform_distribution(["0", "1"]), 0.0)
    assert stat_query(o, [1, -1]) == 0
    assert o.count == 1


def test_stat_uniform_within_tau():
    p = OutputDistribution(("a", "b", "c"), np.array([0.2, 0.5, 0.3]))
    o = StatOracle(p, 0.01, NoiseMode.uniform(), rng=1)
    phi = np.array([1.0, -0.5, 0.25])
    truth = float(phi @ p.values)
    answers = np.array([o.query(phi) for _ in range(1000)])
    assert np.all(np.abs(answers - truth) <= 0.01)
    assert answers.std() > 0
    assert o.count == 1000


def test_stat_empirical_hoeffding():
    # indicator test functions take values in [0, 1]: shots = ceil(ln(2/delta) / (2 tau^2))
    tau, delta = 0.05, 0.05
    shots = hoeffding_shots(tau, delta, value_range=1.0)
    assert shots == math.ceil(math.log(2 / delta) / (2 * tau**2))
    p = OutputDistribution(("0", "1"), np.array([0.3, 0.7]))
    o = StatOracle(p, tau, NoiseMode.empirical(shots), rng=2)
    phi = np.array([1.0, 0.0])
    dev = np.array([abs(o.query(phi) - 0.3) for _ in range(1000)])
    assert np.mean(dev <= tau) >= 1 - delta
    # [-1, 1]-valued functions need the range-2 count
    assert hoeffding_shots(tau, delta) == math.ceil(4 * math.log(2 / delta) / (2 * tau**2))


def test_stat_adversarial_is_clamped():
    p = OutputDistribution(("0", "1"), np.array([0.4, 0.6]))
    o = StatOracle(p, 0.1, NoiseMode.adversarial(lambda truth, tau, q: 99.0))
    assert o.query([1, -1]) == pytest.approx(-0.2 + 0.1)
    o = StatOracle(p, 0.1, NoiseMode.adversarial(lambda truth, tau, q: -99.0))
    assert o.query([1, -1]) == pytest.approx(-0.2 - 0.1)


def test_monotone_tolerance():
    p = OutputDistribution(("0", "1"), np.array([0.4, 0.6]))
    o = StatOracle(p, 0.02, NoiseMode.uniform(), rng=3)
    for _ in range(100):
        v = o.query([1, -1])
        assert abs(v + 0.2) <= 0.02 and abs(v + 0.2) <= 0.05


def test_budget():
    o = StatOracle(uniform_distribution(["0", "1"]), 0.0, budget=0)
    with pytest.raises(BudgetExhausted):
        o.query([1, 1])
    reset_budget(o, 5)
    for _ in range(5):
        o.query([1, 1])
    with pytest.raises(BudgetExhausted):
        o.query([1, 1])
    assert o.count == 5
    reset_budget(o, None)
    for _ in range(50):
        o.query([1, 1])
    with pytest.raises(ValueError):
        reset_budget(o, -1)


def test_rejected_query_is_not_counted():
    o = StatOracle(uniform_distribution(["0", "1"]), 0.0)
    with pytest.raises(ValueError):
        o.query([3, 0])
    assert o.count == 0


def test_counter_is_linearizable():
    o = StatOracle(uniform_distribution(["0", "1"]), 0.0, budget=300)

    def work():
        for _ in range(100):
            try:
                o.query([1, -1])
            except BudgetExhausted:
                pass

    threads = [threading.Thread(target=work) for _ in range(5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert o.count == 300


def test_qpstat_examples():
    o = QPStatOracle(_ident(), 0.0)
    assert qpstat_query(o, projector(ket("0")), SZ) == pytest.approx(1)
    c, t = 0.7, 1.5
    o = QPStatOracle(_damp(c, t), 0.0)
    assert o.query(projector(ket("1")), SZ) == pytest.approx(1 - 2 * math.exp(-c * t), abs=1e-12)


def test_qpstat_extended_contract():
    sigma = (projector(ket("0")) - projector(ket("1"))) / 2
    assert QPStatOracle(_ident(), 0.0, extended=True).query(sigma, SZ) == pytest.approx(1)
    with pytest.raises(QueryRejected):
        QPStatOracle(_ident(), 0.0).query(sigma, SZ)
    with pytest.raises(QueryRejected):
        QPStatOracle(_ident(), 0.0, extended=True).query(sigma * 3, SZ)
    with pytest.raises(QueryRejected):
        QPStatOracle(_ident(), 0.0).query(projector(ket("0")), 2 * SZ)


def test_qpstat_noise_modes():
    ch = _damp(0.5, 1.0)
    truth = 1 - 2 * math.exp(-0.5)
    o = QPStatOracle(ch, 0.05, NoiseMode.uniform(), rng=4)
    vals = [o.query(projector(ket("1")), SZ) for _ in range(200)]
    assert max(abs(v - truth) for v in vals) <= 0.05
    shots = hoeffding_shots(0.05, 0.01)
    o = QPStatOracle(ch, 0.05, NoiseMode.empirical(shots), extended=True, rng=5)
    sigma = (projector(ket("1")) - projector(ket("0")) * 0.5) / 1.5
    exact = QPStatOracle(ch, 0.0, extended=True).query(sigma, SX * 0.5 + SZ * 0.5)
    vals = np.array([o.query(sigma, SX * 0.5 + SZ * 0.5) for _ in range(100)])
    assert np.mean(np.abs(vals - exact) <= 0.05) >= 0.95
    assert o.failure_probability <= 0.01

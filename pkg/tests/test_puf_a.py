import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lindpuf.distributions import OutputDistribution, expectation, tv_distance
from lindpuf.experiments import proportion_estimate, toy_model
from lindpuf.oracles import BudgetExhausted, NoiseMode, StatOracle
from lindpuf.ops import RandomStream
from lindpuf.puf_a import (
    Encoding, EncodingError, default_encoding, defect_rate, enroll, enrollment_shots,
    f2_rank, hadamard_spectrum, honest_prover, parseval_check, phi_bit, project_to_simplex,
    reconstruction_adversary, run_authentication, sampler_for, table_lookup_adversary, wht,
)


def _labels(k):
    return tuple(str(i) for i in range(k))


def _rand_dist(k, rng):
    return OutputDistribution(_labels(k), rng.dirichlet(np.ones(k)))


def _device(n=3, delta=1.0, seed=0):
    m = toy_model(n, delta)
    theta = np.abs(m.family.sample_theta(RandomStream(seed, 0)))
    return m.distribution(theta)


def test_encoding_examples():
    assert default_encoding(_labels(4), 2).f2_rank == 2
    assert default_encoding(_labels(2), 1).f2_rank == 1
    with pytest.raises(EncodingError):
        Encoding(_labels(3), 2, (1, 1, 1))
    with pytest.raises(EncodingError):
        Encoding(_labels(3), 2, (0, 1, 1))
    with pytest.raises(EncodingError):
        default_encoding(_labels(5), 2)
    with pytest.raises(EncodingError):
        default_encoding(_labels(4), 5)


def test_inflated_encoding_has_full_rank():
    enc = default_encoding(_labels(16), 12)
    assert enc.f2_rank == 12 and len(set(enc.codes)) == 16
    assert f2_rank([1, 2, 3]) == 2


def test_phi_bit_examples():
    enc = default_encoding(_labels(8))
    assert np.all(phi_bit(0, enc) == 1)
    assert phi_bit([1], default_encoding(_labels(2), 1)).tolist() == [1, -1]
    for b in range(8):
        assert set(phi_bit(b, enc)) <= {-1.0, 1.0}
    with pytest.raises(ValueError):
        phi_bit([1, 0], enc)


def test_phi_bit_matches_definition():
    enc = default_encoding(_labels(6), 4)
    for b in range(16):
        bits = [(b >> (3 - i)) & 1 for i in range(4)]
        direct = [(-1) ** sum(bi * ((c >> (3 - i)) & 1) for i, bi in enumerate(bits)) for c in enc.codes]
        assert phi_bit(bits, enc).tolist() == direct
        assert phi_bit(b, enc).tolist() == direct


def test_wht_examples():
    u = np.full(8, 1 / 8)
    assert np.allclose(wht(u), [1, 0, 0, 0, 0, 0, 0, 0])
    assert np.allclose(wht(np.eye(8)[0]), np.ones(8))
    x = np.random.default_rng(0).normal(size=32)
    assert np.max(np.abs(wht(wht(x), inverse=True) - x)) <= 1e-12
    with pytest.raises(ValueError):
        wht(np.ones(6))


def test_spectrum_equals_expectations():
    rng = np.random.default_rng(1)
    p = _rand_dist(5, rng)
    enc = default_encoding(p.labels, 4)
    spec = hadamard_spectrum(p, enc)
    for b in range(16):
        assert spec[b] == pytest.approx(expectation(p, phi_bit(b, enc)), abs=1e-14)


def test_parseval_examples():
    rng = np.random.default_rng(2)
    p = _rand_dist(2, rng)
    enc = default_encoding(p.labels, 1)
    assert parseval_check(p, p, enc) == (0.0, 0.0)
    q = _rand_dist(2, rng)
    lhs, rhs = parseval_check(p, q, enc)
    assert lhs == pytest.approx(2 * (p.values[0] - q.values[0]) ** 2, abs=1e-15)
    assert rhs == pytest.approx(lhs, abs=1e-15)


@given(st.integers(2, 16), st.integers(0, 12), st.integers(0, 2**31))
@settings(max_examples=60, deadline=None)
def test_parseval_random(k, extra, seed):
    lmin = max(1, math.ceil(math.log2(k)))
    l = min(k, lmin + extra, 12)
    rng = np.random.default_rng(seed)
    p, q = _rand_dist(k, rng), _rand_dist(k, rng)
    lhs, rhs = parseval_check(p, q, default_encoding(p.labels, l))
    assert abs(lhs - rhs) <= 1e-12


def test_projection_examples():
    p = _rand_dist(4, np.random.default_rng(3))
    assert np.allclose(project_to_simplex(p.values).values, p.values)
    assert np.allclose(project_to_simplex([0.6, 0.6]).values, [0.5, 0.5])
    assert np.allclose(project_to_simplex([2, -1]).values, [1, 0])


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=12), st.integers(0, 2**31))
@settings(max_examples=80, deadline=None)
def test_projection_properties(v, seed):
    v = np.array(v)
    w = project_to_simplex(v).values
    assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-12
    p = np.random.default_rng(seed).dirichlet(np.ones(v.size))
    assert np.linalg.norm(w - p) <= np.linalg.norm(v - p) + 1e-12


def test_enroll_examples():
    p = _device()
    fp = enroll(p, 0.1, 0.01)
    assert np.array_equal(fp.values, p.values) and fp.eta == 0
    assert enrollment_shots(16, 0.05, 0.01) == 1615
    rng = np.random.default_rng(4)
    q = _rand_dist(16, rng)
    sampler = sampler_for(q)
    ok = 0
    for _ in range(100):
        f = enroll(sampler, 0.05, 0.01, rng, q.labels)
        assert f.shots_used == 1615
        ok += np.max(np.abs(f.values - q.values)) <= 0.05
    assert ok >= 99


def test_authentication_examples():
    p = _device()
    enc = default_encoding(p.labels)
    fp = enroll(p, 0, 0.01)
    for s in range(20):
        tr = run_authentication(fp, honest_prover(StatOracle(p, 0.0), enc), enc, 0.01, 16, s)
        assert tr.verdict and all(r.accepted for r in tr.rounds)
    assert run_authentication(fp, lambda b: 0.0, enc, 0.01, 0, 0).verdict
    short = sum(run_authentication(fp, lambda b: 0.0, enc, 0.02, 1, s).verdict for s in range(200))
    long_ = sum(run_authentication(fp, lambda b: 0.0, enc, 0.02, 32, s).verdict for s in range(200))
    assert long_ <= short and long_ == 0


def test_transcript_log_and_failures():
    p = _device()
    enc = default_encoding(p.labels)
    fp = enroll(p, 0, 0.01)

    def broken(bits):
        raise RuntimeError("no answer")

    tr = run_authentication(fp, broken, enc, 0.01, 3, 0)
    assert not tr.verdict and not any(r.accepted for r in tr.rounds)
    tr = run_authentication(fp, honest_prover(StatOracle(p, 0.0), enc), enc, 0.01, 4, 1)
    lines = tr.to_log().splitlines()
    assert len(lines) == 4
    b, u, v, flag = lines[0].split()
    assert int(b, 16) == tr.rounds[0].bits and float(u) == tr.rounds[0].u and flag == "1"


def test_honest_prover_accounting_and_noise():
    p = _device()
    enc = default_encoding(p.labels)
    o = StatOracle(p, 0.0)
    fp = enroll(p, 0, 0.01)
    tr = run_authentication(fp, honest_prover(o, enc), enc, 0.0, 12, 2)
    assert o.count == 12 and all(abs(r.v - r.u) <= 1e-14 for r in tr.rounds)
    o = StatOracle(p, 0.03, NoiseMode.uniform(), rng=5)
    tr = run_authentication(fp, honest_prover(o, enc), enc, 0.03, 50, 3)
    assert all(abs(r.v - r.u) <= 0.03 for r in tr.rounds) and tr.verdict
    o = StatOracle(p, 0.0, budget=2)
    assert not run_authentication(fp, honest_prover(o, enc), enc, 0.0, 3, 4).verdict


def test_table_lookup_examples():
    p = _device()
    enc = default_encoding(p.labels)
    fp = enroll(p, 0, 0.01)
    full = table_lookup_adversary(StatOracle(p, 0.0, budget=enc.size), enc, enc.size, 0)
    assert all(run_authentication(fp, full, enc, 0.01, 16, s).verdict for s in range(20))
    zero = table_lookup_adversary(StatOracle(p, 0.0, budget=0), enc, 0, 0)
    assert all(zero(b) == 0 for b in range(enc.size))
    cm = table_lookup_adversary(StatOracle(p, 0.0), enc, 3, 1, miss="cache_mean")
    assert cm.miss_value == pytest.approx(np.mean(list(cm.table.values())))
    with pytest.raises(BudgetExhausted):
        table_lookup_adversary(StatOracle(p, 0.0, budget=1), enc, 2, 0)


def test_table_lookup_large_l_rate_below_full():
    p = _device(4)
    enc = default_encoding(p.labels, 12)
    fp = enroll(p, 0, 0.01)
    q = enc.size // 64
    passes = 0
    for s in range(30):
        adv = table_lookup_adversary(StatOracle(p, 0.0, budget=q), enc, q, RandomStream(1, s))
        passes += run_authentication(fp, adv, enc, 0.02, 16, RandomStream(2, s)).verdict
    est = proportion_estimate(passes, 30)
    assert est.high < 1.0 and est.estimate == 0


def test_reconstruction_examples():
    p = _device()
    enc = default_encoding(p.labels, 5)
    resp, d = reconstruction_adversary(StatOracle(p, 0.0), enc)
    assert tv_distance(d, p) <= 1e-10
    fp = enroll(p, 0, 0.01)
    assert run_authentication(fp, resp, enc, 0.01, 32, 0).verdict
    tau = 0.02
    for s in range(10):
        _, d = reconstruction_adversary(StatOracle(p, tau, NoiseMode.uniform(), rng=s), enc)
        assert tv_distance(d, p) <= math.sqrt(len(p)) * tau * 1.01
    with pytest.raises(BudgetExhausted):
        reconstruction_adversary(StatOracle(p, 0.0, budget=3), enc)


def test_learning_bridge_with_synthetic_defects():
    rng = np.random.default_rng(6)
    p = _rand_dist(16, rng)
    enc = default_encoding(p.labels, 6)
    fp = enroll(p, 0, 0.01)
    spec = hadamard_spectrum(p, enc)
    tau, n_chal, sessions = 0.01, 8, 400
    for frac in (0.0, 0.05, 0.2):
        bad = set(rng.choice(enc.size, size=int(frac * enc.size), replace=False).tolist())
        resp = lambda b, bad=bad: float(spec[b]) + (1.0 if b in bad else 0.0)
        alpha = np.mean([run_authentication(fp, resp, enc, tau, n_chal, RandomStream(7, s)).verdict
                         for s in range(sessions)])
        defects = defect_rate(resp, p, enc, 3 * tau)
        assert defects == pytest.approx(len(bad) / enc.size)
        if alpha > 0:
            assert defects <= 1 - alpha ** (1 / n_chal) + 0.03

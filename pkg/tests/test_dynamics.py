import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lindpuf.dynamics import (
    Generator, JumpTerm, NumericalError, ParametrizedFamily, Propagator, all_ones_state,
    amplitude_damping_family, assemble, dissipator_apply, evolve, generator_apply,
    materialize_superoperator, one_to_one_norm_lb, propagate, random_generator,
)
from lindpuf.distributions import computational_povm, output_distribution
from lindpuf.linear_response import amp_damp_analytic_distribution
from lindpuf.ops import (
    SM, SX, SY, SZ, DimensionError, embed, ket, projector, random_density_matrix,
    sample_sphere, trace_norm, vec,
)

P0, P1 = projector(ket("0")), projector(ket("1"))


def test_dissipator_examples():
    g = 0.7
    assert np.allclose(dissipator_apply(JumpTerm(SM, g), P1), g * (P0 - P1))
    assert np.allclose(dissipator_apply(JumpTerm(SX, 2.0), np.zeros((2, 2))), 0)
    assert np.allclose(dissipator_apply(JumpTerm(SM, 1.0), P0), 0)
    with pytest.raises(DimensionError):
        dissipator_apply(JumpTerm(SM), np.eye(4))


def test_generator_apply_examples():
    assert np.allclose(generator_apply(Generator(2, SZ), SX), 2 * SY)
    assert np.allclose(generator_apply(Generator(2, SX), np.eye(2)), 0)
    g = Generator(4, None, (JumpTerm(embed(SM, 0, 2), 0.5),))
    x = projector(ket("11"))
    assert np.allclose(generator_apply(g, x), 0.5 * (projector(ket("01")) - x))


def test_generator_invariants_random():
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = random_generator(3, 2, rng)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        out = generator_apply(g, a + a.conj().T)
        assert np.max(np.abs(out - out.conj().T)) <= 1e-12
        assert abs(np.trace(generator_apply(g, a))) <= 1e-12


def test_assemble_examples():
    fam = amplitude_damping_family(2, 0.2, gamma=1.5)
    g = assemble(fam, np.array([1.0, 0.0]))
    active = [j for j in g.jumps if j.weight != 0]
    assert len(active) == 1
    assert active[0].weight == pytest.approx(0.2 * 1.5 / math.sqrt(2), abs=1e-15)
    assert assemble(fam, np.array([-1.0, 0.0])).signed_rates
    assert not g.signed_rates
    with pytest.raises(ValueError):
        assemble(fam, np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        assemble(fam, np.array([1.0]))


def test_assemble_product_zero_theta_is_reference():
    ref = random_generator(2, 1, np.random.default_rng(1))
    fam = ParametrizedFamily(ref, (Generator(2, None, (JumpTerm(SM),)),), 0.1, "product", 0.05)
    g = assemble(fam, np.zeros(1))
    x = random_density_matrix(2, np.random.default_rng(2))
    assert np.allclose(generator_apply(g, x), generator_apply(ref, x), atol=1e-15)


def test_c_g_toy():
    assert amplitude_damping_family(3, 0.1, gamma=0.8).c_g == pytest.approx(1.6)


def test_materialize_examples():
    assert not np.any(materialize_superoperator(Generator.zero(2)))
    s = materialize_superoperator(Generator(2, None, (JumpTerm(SM, 0.3),)))
    # column for |1><1| (vec index 3): -g on itself, +g into |0><0| (index 0)
    assert s[3, 3] == pytest.approx(-0.3)
    assert s[0, 3] == pytest.approx(0.3)
    rng = np.random.default_rng(3)
    g = random_generator(4, 3, rng)
    s = materialize_superoperator(g)
    for _ in range(20):
        x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        assert np.max(np.abs(s @ vec(x) - vec(generator_apply(g, x)))) <= 1e-12
    with pytest.raises(DimensionError):
        materialize_superoperator(g, cap=8)


def test_evolve_examples():
    rho = random_density_matrix(2, np.random.default_rng(4))
    g = random_generator(2, 2, np.random.default_rng(5))
    assert np.allclose(evolve(Propagator(g, 0.0), rho), rho)
    c, t = 0.9, 1.3
    for backend in ("dense", "matfree"):
        out = evolve(Propagator(Generator(2, None, (JumpTerm(SM, c),)), t, backend), P1)
        assert np.allclose(out, np.diag([1 - math.exp(-c * t), math.exp(-c * t)]), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_evolve_matches_factorized_toy(n):
    rng = np.random.default_rng(10 + n)
    fam = amplitude_damping_family(n, 0.8, gamma=1.2)
    povm = computational_povm(n)
    for _ in range(5):
        th = sample_sphere(n, rng)
        for backend in ("dense", "matfree"):
            rho = evolve(Propagator(assemble(fam, th), 0.9, backend), all_ones_state(n))
            p = output_distribution(rho, povm).values
            q = amp_damp_analytic_distribution(th, 1.2, 0.9, 0.8).values
            assert np.max(np.abs(p - q)) <= 1e-8


def test_evolve_rejects_non_states():
    p = Propagator(Generator.zero(2), 1.0)
    with pytest.raises(ValueError):
        evolve(p, 2 * P0)
    with pytest.raises(ValueError):
        evolve(p, np.array([[0.5, 1.0], [0.0, 0.5]]))


def test_matfree_failure_carries_diagnostics():
    g = Generator(2, None, (JumpTerm(SM, 1.0),))
    with pytest.raises(NumericalError) as info:
        propagate(Propagator(g, 1.0, "matfree", tolerance=1e-300), P1)
    assert info.value.diagnostics


def test_dense_matfree_agree_random():
    rng = np.random.default_rng(6)
    for d in (2, 4, 8, 16):
        g = random_generator(d, 3, rng)
        rho = random_density_matrix(d, rng)
        a = evolve(Propagator(g, 0.8, "dense"), rho)
        b = evolve(Propagator(g, 0.8, "matfree"), rho)
        assert np.max(np.abs(a - b)) <= 1e-9


def test_trace_hermiticity_contractivity():
    rng = np.random.default_rng(7)
    for _ in range(10):
        g = random_generator(4, 2, rng)
        p = Propagator(g, 1.1)
        r, s = random_density_matrix(4, rng), random_density_matrix(4, rng)
        a, b = evolve(p, r), evolve(p, s)
        assert abs(np.trace(a) - 1) <= 1e-10
        assert np.max(np.abs(a - a.conj().T)) <= 1e-10
        assert trace_norm(a - b) <= trace_norm(r - s) + 1e-9


def test_one_to_one_examples():
    rng = np.random.default_rng(8)
    assert one_to_one_norm_lb(lambda x: x, 5, rng, dim=3) == pytest.approx(1, abs=1e-12)
    assert one_to_one_norm_lb(lambda x: 2 * x, 5, rng, dim=3) == pytest.approx(2, abs=1e-12)
    g = Generator(2, None, (JumpTerm(SM, 0.4),))
    lb = one_to_one_norm_lb(lambda x: generator_apply(g, x), 3, rng, dim=2, extra_inputs=[P1])
    assert lb >= 0.8 - 1e-12


def test_one_to_one_monotone_in_samples():
    g = random_generator(3, 2, np.random.default_rng(9))
    vals = [one_to_one_norm_lb(lambda x: generator_apply(g, x), n, np.random.default_rng(0), dim=3)
            for n in (1, 5, 20)]
    assert vals == sorted(vals)


@given(st.integers(2, 4), st.floats(0.05, 1.0), st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_generator_lipschitz_on_sphere(n, delta, seed):
    rng = np.random.default_rng(seed)
    fam = amplitude_damping_family(n, delta)
    a, b = sample_sphere(n, rng), sample_sphere(n, rng)
    diff = assemble(fam, b) - assemble(fam, a)
    lb = one_to_one_norm_lb(lambda x: generator_apply(diff, x), 20, rng, dim=2**n)
    assert lb <= delta * fam.c_g * np.linalg.norm(b - a) + 1e-9

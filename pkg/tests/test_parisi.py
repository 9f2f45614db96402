import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balancedglass import mixture as mx
from balancedglass import parisi as pa
from balancedglass._seeding import stream
from oracles import ising_k1_direct, rs_sk


def _bsk_closed(beta):
    r = math.sqrt(2) * beta
    return 0.5 * beta * beta if beta <= 1 / math.sqrt(2) else r - 0.5 * math.log(r) - 0.75


def _random_path(rng, k, S=1):
    m = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, k - 1)), [1.0]])
    q = np.vstack([np.zeros(S), np.sort(rng.uniform(0, 1, (k, S)), axis=0), np.ones(S)])
    return pa.ParisiPath(m, q)


def test_path_validation():
    pa.ParisiPath([0, 1], [0, 0.3, 1])
    with pytest.raises(ValueError):
        pa.ParisiPath([0, 0.5, 0.5, 1], [0, 0.1, 0.2, 0.3, 1])
    with pytest.raises(ValueError):
        pa.ParisiPath([0, 1], [0, 1.2, 1])
    with pytest.raises(ValueError):
        pa.ParisiPath([0, 0.9], [0, 0.3, 1])
    with pytest.raises(ValueError):
        pa.ParisiPath([0, 1], [[0, 0], [0.5, 0.2], [0.4, 1], [1, 1]])


def test_lift_path():
    path = pa.ParisiPath([0, 1], [0, 0.3, 1])
    lifted = pa.lift_path(path, 2)
    np.testing.assert_array_equal(lifted.q, [[0, 0], [0.3, 0.3], [1, 1]])
    same = pa.lift_path(path, 1)
    np.testing.assert_array_equal(same.q, path.q)


def test_zero_mixture_gives_zero():
    f = mx.build_mixture(mx.ModelSpec(("a", "b"), ("1/2", "1/2"), {}))
    path = _random_path(stream(1), 3, 2)
    assert pa.ising_functional(f, path).value == 0
    sph = pa.spherical_functional(f, path)
    assert sph.value == pytest.approx(0, abs=1e-14)
    np.testing.assert_allclose(sph.diagnostics["b_star"], 1.0, atol=1e-10)


@pytest.mark.parametrize("q", [0.0, 0.2, 0.7])
@pytest.mark.parametrize("beta", [0.5, 1.2])
def test_ising_k1_matches_double_integral(beta, q):
    f = mx.single_species_mixture({2: beta * beta})
    path = pa.ParisiPath([0, 1], [0, q, 1])
    ref = ising_k1_direct(lambda x: 2 * beta * beta * x, lambda x: beta * beta * x * x, q, n=200)
    assert pa.ising_functional(f, path, nodes=200).value == pytest.approx(ref, abs=1e-10)
    assert pa.ising_functional(f, path).value == pytest.approx(ref, abs=1e-6)


def test_ising_k1_mixed_matches_double_integral():
    f = mx.single_species_mixture({2: 0.5, 3: 0.3})
    xi_p = lambda x: 1.0 * x + 0.9 * x * x
    th = lambda x: 0.5 * x * x + 0.6 * x**3
    got = pa.ising_functional(f, pa.ParisiPath([0, 1], [0, 0.4, 1]), nodes=200).value
    assert got == pytest.approx(ising_k1_direct(xi_p, th, 0.4, n=200), abs=1e-10)


@pytest.mark.parametrize("q", [0.05, 0.3, 0.6])
def test_ising_rs_sk(q):
    f = mx.single_species_mixture({2: 0.25})
    assert pa.ising_functional(f, pa.ParisiPath([0, 1], [0, q, 1])).value == pytest.approx(rs_sk(0.5, q), abs=1e-12)


def test_ising_random_field_only():
    # Degree-1 terms act as a Gaussian field: exact value E log cosh(Delta z).
    f = mx.single_species_mixture({1: 0.64})
    z, w = np.polynomial.hermite_e.hermegauss(200)
    ref = float(np.dot(w / math.sqrt(2 * math.pi), np.log(np.cosh(0.8 * z))))
    assert pa.ising_functional(f, pa.ParisiPath([0, 1], [0, 0.5, 1]), nodes=200).value == pytest.approx(ref, abs=1e-12)


def test_ising_two_level_nested_oracle():
    beta = 1.5
    f = mx.single_species_mixture({2: beta * beta})
    m1, q1, q2 = 0.4, 0.3, 0.8
    xp = lambda x: 2 * beta * beta * x
    th = lambda x: beta * beta * x * x
    z, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / math.sqrt(2 * math.pi)
    v0, v1, v2 = xp(q1), xp(q2) - xp(q1), xp(1) - xp(q2)
    h = math.sqrt(v0) * z[:, None, None] + math.sqrt(v1) * z[None, :, None] + math.sqrt(v2) * z[None, None, :]
    X2 = np.log(np.cosh(h) @ w)
    X1 = np.log(np.exp(m1 * X2) @ w) / m1
    X0 = float(w @ X1)
    ref = X0 - 0.5 * (m1 * (th(q2) - th(q1)) + 1.0 * (th(1) - th(q2)))
    got = pa.ising_functional(f, pa.ParisiPath([0, m1, 1], [0, q1, q2, 1]), nodes=80).value
    assert got == pytest.approx(ref, abs=1e-9)


def test_ising_quadrature_converged_at_default():
    f = mx.single_species_mixture({2: 1.0})
    for path in [pa.ParisiPath([0, 1], [0, 0.4, 1]), pa.ParisiPath([0, 0.5, 1], [0, 0.2, 0.6, 1])]:
        a = pa.ising_functional(f, path, nodes=40).value
        b = pa.ising_functional(f, path, nodes=80).value
        assert abs(a - b) < 1e-6


def test_ising_budget_reduces_nodes():
    f = mx.single_species_mixture({2: 1.0})
    path = _random_path(stream(5), 5)
    val = pa.ising_functional(f, path)
    assert val.diagnostics["nodes_used"][0] ** 5 <= pa.QUADRATURE_BUDGET


def test_negative_increment_rejected():
    # A mixture with a negative coefficient makes xi^s decrease.
    f = mx.MixtureFunction(("a",), np.array([1.0]), {(0, 0): -1.0}, 2)
    with pytest.raises(ValueError, match="negative increment"):
        pa.ising_functional(f, pa.ParisiPath([0, 1], [0, 0.5, 1]))


def test_spherical_high_temperature_rs():
    beta = 0.5
    f = mx.single_species_mixture({2: beta * beta})
    assert pa.spherical_functional(f, pa.ParisiPath([0, 1], [0, 0, 1])).value == pytest.approx(0.5 * beta * beta, abs=1e-12)


@pytest.mark.parametrize("m,a", [(0.3, 0.5), (0.7, 0.2), (0.05, 0.9)])
def test_spherical_one_step_matches_bracket(m, a):
    # k = 2 path with q_1 = 0 against the two-parameter bracket.
    from balancedglass.reference import pure_bracket

    beta, P = 1.7, 3
    f = mx.single_species_mixture({P: beta * beta})
    got = pa.spherical_functional(f, pa.ParisiPath([0, m, 1], [0, 0, a, 1])).value
    # Both sides share the infimum, so compare after optimizing a and m.
    assert np.isfinite(got) and np.isfinite(pure_bracket(m, a, beta, P))


@pytest.mark.parametrize("beta", [2.0, 3.0])
def test_spherical_one_step_infimum_matches_bracket(beta):
    from balancedglass.reference import pure_bound_2param

    f = mx.single_species_mixture({3: beta * beta})
    res = pa.optimize_path(f, "spherical", 2, restarts=3, seed=0)
    assert res.value.value == pytest.approx(pure_bound_2param(beta, 1, 2), abs=1e-8)


def test_spherical_inner_minimizer_first_order_condition():
    for i in range(20):
        rng = stream(11, i)
        spec = mx.random_balanced_spec(rng, 2, 4)
        f = mx.build_mixture(spec)
        path = _random_path(rng, int(rng.integers(1, 5)), 2)
        val = pa.spherical_functional(f, path)
        assert np.all(val.diagnostics["b_star"] > val.diagnostics["d1"])
        assert np.all(np.abs(val.diagnostics["dX_db"]) <= 1e-8)


def test_functional_value_identity():
    rng = stream(12)
    spec = mx.random_balanced_spec(rng, 3, 3)
    f = mx.build_mixture(spec)
    path = _random_path(rng, 2, 3)
    for val in (pa.ising_functional(f, path), pa.spherical_functional(f, path)):
        assert val.value == pytest.approx(float(np.dot(f.lam, val.per_species) + val.theta_sum), abs=1e-14)


def test_theta_telescoping():
    rng = stream(13)
    spec = mx.random_balanced_spec(rng, 2, 4)
    f = mx.build_mixture(spec)
    path = _random_path(rng, 4, 2)
    th = [mx.theta(f, path.q[j]) for j in range(path.k + 2)]
    direct = -0.5 * (sum(path.m[j] * th[j + 1] for j in range(1, path.k + 1)) - sum(path.m[j] * th[j] for j in range(1, path.k + 1)))
    assert pa.theta_correction(f, path) == pytest.approx(direct, abs=1e-12)


def test_optimize_sk_high_temperature_ising():
    f = mx.single_species_mixture({2: 0.25})
    res = pa.optimize_path(f, "ising", 1, restarts=3, seed=0)
    assert res.value.value == pytest.approx(0.125, abs=1e-9)
    assert res.path.q[1, 0] < 1e-3


def test_optimize_zero_mixture():
    f = mx.single_species_mixture({})
    for ens in ("ising", "spherical"):
        assert pa.optimize_path(f, ens, 2, restarts=2).value.value == pytest.approx(0.0, abs=1e-14)


def test_optimize_spherical_sk():
    f = mx.single_species_mixture({2: 1.0})
    res = pa.optimize_path(f, "spherical", 2, restarts=2, seed=3)
    assert res.value.value == pytest.approx(_bsk_closed(1.0), abs=1e-8)


def test_refinement_monotone_and_seed_determinism():
    f = mx.build_mixture(mx.bipartite_sk(1.2))
    res = pa.optimize_path(f, "spherical", 3, restarts=2, seed=7)
    h = res.history
    assert all(h[i + 1] <= h[i] + 1e-9 for i in range(len(h) - 1))
    again = pa.optimize_path(f, "spherical", 3, restarts=2, seed=7)
    assert again.value.value == res.value.value
    np.testing.assert_array_equal(again.path.q, res.path.q)


def test_refinement_monotone_ising():
    f = mx.single_species_mixture({2: 1.0})
    res = pa.optimize_path(f, "ising", 3, restarts=1, seed=1, maxiter=400)
    h = res.history
    assert all(h[i + 1] <= h[i] + 1e-9 for i in range(len(h) - 1))


def test_workers_do_not_change_result():
    f = mx.single_species_mixture({2: 1.0, 4: 0.3})
    a = pa.optimize_path(f, "spherical", 2, restarts=3, seed=5, workers=1)
    b = pa.optimize_path(f, "spherical", 2, restarts=3, seed=5, workers=2)
    assert a.value.value == b.value.value


def test_k_cap():
    f = mx.single_species_mixture({2: 1.0})
    with pytest.raises(ValueError):
        pa.optimize_path(f, "ising", 7)
    with pytest.raises(ValueError):
        pa.optimize_path(f, "spherical", 9)
    with pytest.raises(ValueError):
        pa.optimize_path(f, "potts", 1)


def test_embed_path_preserves_value():
    f = mx.build_mixture(mx.random_balanced_spec(stream(21), 2, 3))
    path = _random_path(stream(22), 2, 2)
    up = pa.embed_path(path)
    assert up.k == 3
    for ens in ("ising", "spherical"):
        assert pa.evaluate(f, up, ens).value == pytest.approx(pa.evaluate(f, path, ens).value, abs=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 3), st.integers(1, 3))
def test_diagonal_lift_equality_property(seed, S, k):
    rng = stream(seed)
    spec = mx.random_balanced_spec(rng, S, 4)
    f = mx.build_mixture(spec)
    path = _random_path(rng, k)
    lifted = pa.lift_path(path, S)
    for ens, tol in (("spherical", 1e-8), ("ising", 5e-3)):
        assert abs(pa.evaluate(f, lifted, ens).value - pa.single_species_functional(f, path, ens).value) <= tol


def test_gse_extrapolation_exact_model():
    fit = pa.gse_from_free_energy(lambda a: (math.sqrt(2) * a - 0.5 * math.log(math.sqrt(2) * a) - 0.75) / a)
    assert fit.value == pytest.approx(math.sqrt(2), abs=1e-10)
    assert fit.reliable


def test_gse_extrapolation_zero_and_flags():
    assert pa.gse_from_free_energy(lambda a: 0.0).value == pytest.approx(0.0, abs=1e-14)
    fit = pa.gse_from_free_energy(lambda a: 1.0 / a)
    assert not fit.reliable
    with pytest.raises(ValueError):
        pa.gse_from_free_energy(lambda a: 0.0, alphas=[2.0, 1.0, 3.0])

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balancedglass import mixture as mx
from balancedglass import parisi as pa
from balancedglass import reference as ref


def test_bipartite_closed_form_values():
    assert ref.bipartite_sk_free_energy(0.5) == pytest.approx(0.125, abs=1e-15)
    b = 2.0
    r = math.sqrt(2) * b
    assert ref.bipartite_sk_free_energy(b) == pytest.approx(r - 0.5 * math.log(r) - 0.75, abs=1e-15)
    assert ref.bipartite_sk_free_energy(0.0) == 0.0


def test_bipartite_closed_form_continuous_at_transition():
    bc = 1 / math.sqrt(2)
    lo, hi = ref.bipartite_sk_free_energy(bc - 1e-9), ref.bipartite_sk_free_energy(bc + 1e-9)
    assert abs(lo - hi) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 6.0), st.floats(0.01, 6.0))
def test_bipartite_closed_form_monotone_and_capped(b1, b2):
    lo, hi = sorted((b1, b2))
    assert ref.bipartite_sk_free_energy(lo) <= ref.bipartite_sk_free_energy(hi) + 1e-15
    assert ref.bipartite_sk_free_energy(hi) <= 0.5 * hi * hi + 1e-12


def test_bipartite_closed_form_matches_diagonal_parisi():
    for beta in (0.5, 1.0, 2.5):
        f = mx.single_species_mixture(mx.reduce_beta(mx.bipartite_sk(beta)))
        val = pa.optimize_path(f, "spherical", 2, restarts=2, seed=0).value.value
        assert val == pytest.approx(ref.bipartite_sk_free_energy(beta), abs=1e-8)


def test_unrestricted_bipartite_infimum_undershoots():
    # The bipartite mixture is not convex, so free multi-species paths reach
    # below the free energy; only diagonal paths recover it.
    f = mx.build_mixture(mx.bipartite_sk(0.5))
    val = pa.optimize_path(f, "spherical", 1, restarts=2, seed=0).value.value
    assert val < ref.bipartite_sk_free_energy(0.5) - 1e-3


def test_bipartite_rejects_negative():
    with pytest.raises(ValueError):
        ref.bipartite_sk_free_energy(-1.0)


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.0])
def test_pure_bound_p1_q1(beta):
    assert ref.pure_bound_2param(beta, 1, 1) == pytest.approx(ref.bipartite_sk_free_energy(beta), abs=1e-9)


def test_pure_bound_below_annealed():
    for beta in (0.5, 1.5, 3.0):
        f = mx.build_mixture(mx.pure_bipartite(2, 1, beta))
        assert ref.pure_bound_2param(beta, 2, 1) <= ref.annealed_bound(f) + 1e-12


def test_pure_bracket_rs_limit():
    # m -> 1 or a -> 0 recovers the annealed value beta^2 / 2.
    for beta in (0.5, 2.0):
        assert ref.pure_bracket(1.0, 0.5, beta, 3) == pytest.approx(0.5 * beta * beta, abs=1e-9)
        assert ref.pure_bracket(0.4, 0.0, beta, 3) == pytest.approx(0.5 * beta * beta, abs=1e-9)


def test_annealed_bound_examples():
    assert ref.annealed_bound(mx.build_mixture(mx.sk(1.0))) == pytest.approx(0.5)
    assert ref.annealed_bound(mx.build_mixture(mx.bipartite_sk(1.0))) == pytest.approx(0.5)
    assert ref.annealed_bound(mx.single_species_mixture({})) == 0.0


def test_sk_critical_check():
    assert ref.sk_critical_check(mx.sk(1 / math.sqrt(2))) == pytest.approx(1.0)
    assert ref.sk_critical_check(mx.bipartite_sk(1 / math.sqrt(2))) == pytest.approx(1.0)
    assert ref.sk_critical_check(mx.bipartite_sk(1.0)) == pytest.approx(2.0)
    with pytest.raises(ValueError, match="2-spin"):
        ref.sk_critical_check(mx.pure_bipartite(2, 1, 1.0))


def test_e0_two_spin():
    assert ref.e0_pure(2) == math.sqrt(2)
    fit = ref.e0_extrapolation(2)
    assert fit.value == pytest.approx(math.sqrt(2), rel=1e-6)
    assert fit.reliable


def test_pure_free_energy_path_increasing_in_alpha():
    vals = ref.pure_free_energy_path(3, np.geomspace(2, 32, 5))
    assert np.all(np.diff(vals) > 0)


@pytest.mark.slow
def test_e0_increasing_in_p():
    vals = [ref.e0_pure(p) for p in range(2, 7)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[1] == pytest.approx(1.657, abs=1e-3)

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bvpoint.generators import grid_space, random_field, random_graph_space, random_measure
from bvpoint.maximal import (
    ball_average,
    check_weak_type,
    function_profile,
    maximal_function,
    maximal_function_measure,
    restricted_maximal,
    restricted_maximal_measure,
    weak_type_constant,
)
from bvpoint.space import SpaceError, ball

from oracles import brute_dilation, brute_maximal, vitali_bound


def test_s2_average(s2):
    assert ball_average(s2, "u", ball(s2, "a", 1.5)) == 1.0


def test_s2_maximal(s2):
    assert restricted_maximal(s2, "u", "a", 1.0) == 0.0
    assert restricted_maximal(s2, "u", "a", 2.0) == 1.0


def test_s2_maximal_measure(s2):
    assert restricted_maximal_measure(s2, "spike", "a", 2.0) == 3.0
    assert restricted_maximal_measure(s2, "spike", "b", 2.0) == 1.5


def test_radius_must_be_positive(s2):
    with pytest.raises(SpaceError):
        restricted_maximal(s2, "u", "a", 0.0)


@pytest.mark.parametrize("seed", range(6))
def test_maximal_agrees_with_dense_grid(seed):
    sp = random_graph_space(18, seed)
    u = random_field(sp, seed)
    nu = random_measure(sp, seed)
    for x in range(sp.n):
        for R in (0.2, 0.7, 1.5, math.inf):
            assert restricted_maximal(sp, u, x, R) == pytest.approx(brute_maximal(sp, u, x, R), rel=1e-12, abs=1e-14)
            assert restricted_maximal_measure(sp, nu, x, R) == pytest.approx(
                brute_maximal(sp, nu, x, R, measure=True), rel=1e-12, abs=1e-14
            )


def test_vectorized_forms_agree_with_pointwise_calls():
    sp = random_graph_space(20, 1)
    u = random_field(sp, 2)
    nu = random_measure(sp, 3)
    for R in (0.5, 2.0):
        assert np.array_equal(maximal_function(sp, u, R), [restricted_maximal(sp, u, x, R) for x in range(sp.n)])
        assert np.array_equal(
            maximal_function_measure(sp, nu, R), [restricted_maximal_measure(sp, nu, x, R) for x in range(sp.n)]
        )


@given(st.integers(0, 50), st.floats(-1e3, 1e3, allow_nan=False))
def test_constant_fields_are_exact(seed, c):
    sp = random_graph_space(10, seed)
    m = maximal_function(sp, np.full(sp.n, c), 1.0)
    assert np.all(m == abs(c))


@given(st.integers(0, 50), st.floats(0.05, 3.0))
def test_maximal_properties(seed, R):
    sp = random_graph_space(12, seed)
    u = random_field(sp, seed + 1)
    prof = function_profile(sp, u)
    m_r = prof.values(R)
    # the singleton ball is always admissible and M_R grows with R
    assert np.all(m_r >= np.abs(u) - 1e-12)
    assert np.all(prof.values(2 * R) >= m_r)
    assert np.all(prof.values(math.inf) <= np.abs(u).max() + 1e-12)


@given(st.integers(0, 50), st.sampled_from([0.25, 0.5, 2.0, 8.0]))
def test_measure_maximal_is_linear_in_nu(seed, t):
    sp = random_graph_space(10, seed)
    nu = random_measure(sp, seed)
    assert np.array_equal(maximal_function_measure(sp, t * nu, 0.8), t * maximal_function_measure(sp, nu, 0.8))


@pytest.mark.parametrize("seed", range(4))
def test_weak_type_constant_matches_dense_scan(seed):
    sp = random_graph_space(14, seed)
    assert weak_type_constant(sp).value == pytest.approx(brute_dilation(sp, 5.0), rel=1e-12)


def test_grid_weak_type_constant_is_moderate():
    cw = weak_type_constant(grid_space(12)).value
    assert 20 < cw < 60


@pytest.mark.parametrize("seed", range(4))
def test_vitali_covering_supports_weak_type(seed):
    sp = random_graph_space(16, seed)
    nu = random_measure(sp, seed, sparsity=0.5)
    cw = weak_type_constant(sp).value
    total = nu.sum()
    for t in np.geomspace(0.05, 5.0, 7):
        mu_e, mu_cover, mu_picked = vitali_bound(sp, nu, t)
        assert mu_e <= mu_cover <= cw * mu_picked * (1 + 1e-12)
        assert cw * mu_picked <= cw * total / t * (1 + 1e-12)
        [check] = check_weak_type(sp, nu, [t], cw)
        assert check.holds and check.level_mass == pytest.approx(mu_e)


def test_weak_type_levels_must_be_positive(s2):
    with pytest.raises(SpaceError):
        check_weak_type(s2, "nu", [0.0])

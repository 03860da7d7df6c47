from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bvpoint.characterization import (
    FLAG_NAMES,
    HypothesisError,
    build_proof_trace,
    check_pointwise,
    check_sobolev_pointwise,
    level_index,
    measure_from_density,
    poincare_from_pointwise,
    proof_constants,
    threshold_index,
    trace_flags,
    trace_radius,
)
from bvpoint.generators import grid_space, path_space, random_field, random_graph_space, random_measure, sample, sine_bump
from bvpoint.space import SpaceError, ball, space_from_document
from bvpoint.variation import check_ball_poincare, variation_measure

from oracles import brute_maximal


def dirac_grid(n):
    """Sine bump with its grid variation plus a point mass: gives traces whose
    level window extends above k0."""
    sp = grid_space(n)
    u = sample(sp, sine_bump)
    nu = variation_measure(sp, u, "grid").copy()
    nu[(n // 2) * n + n // 3] += 0.5
    return sp, u, nu


def test_s2_pointwise(s2):
    rep = check_pointwise(s2, "u", "nu", sigma=1.0)
    assert rep.c0_minimal == 1.0 and rep.worst_pair == (0, 1)
    assert check_pointwise(s2, "u", "nu", 1.0, c0=1.0).passed
    assert not check_pointwise(s2, "u", "nu", 1.0, c0=0.5).passed


def test_degenerate_measure_gives_infinite_constant(s2):
    rep = check_pointwise(s2, "u", "zero", 1.0)
    assert rep.c0_minimal == math.inf and rep.worst_pair == (0, 1) and not rep.passed


def test_pointwise_preconditions(s2):
    with pytest.raises(SpaceError):
        check_pointwise(s2, "u", "nu", sigma=0.5)
    with pytest.raises(SpaceError):
        check_pointwise(s2, "u", "nu", 1.0, c0=0.0)


@pytest.mark.parametrize("seed", range(3))
def test_pointwise_matches_pair_enumeration(seed):
    sp = random_graph_space(10, seed)
    u = random_field(sp, seed)
    nu = random_measure(sp, seed, sparsity=0.2)
    sigma = 1.5
    best = 0.0
    for x in range(sp.n):
        for y in range(sp.n):
            if x == y:
                continue
            d = sp.dist[x, y]
            den = d * (brute_maximal(sp, nu, x, sigma * d, True) + brute_maximal(sp, nu, y, sigma * d, True))
            num = abs(u[x] - u[y])
            best = max(best, 0.0 if num == 0 else (math.inf if den == 0 else num / den))
    assert check_pointwise(sp, u, nu, sigma).c0_minimal == pytest.approx(best, rel=1e-12)


@given(st.integers(0, 40), st.floats(-100, 100), st.sampled_from([1.0, 2.0, 3.5]))
def test_constant_field_passes_pointwise(seed, c, sigma):
    sp = random_graph_space(8, seed)
    nu = random_measure(sp, seed)
    assert check_pointwise(sp, np.full(sp.n, c), nu, sigma).c0_minimal == 0.0


@given(st.integers(0, 60), st.sampled_from([0.125, 0.5, 3.0, 16.0]))
def test_pointwise_argmax_invariance(seed, t):
    sp = random_graph_space(9, seed)
    u = random_field(sp, seed)
    nu = random_measure(sp, seed, sparsity=0.0)
    base = check_pointwise(sp, u, nu, 2.0)
    su = check_pointwise(sp, t * u, nu, 2.0)
    snu = check_pointwise(sp, u, t * nu, 2.0)
    assert su.worst_pair == base.worst_pair == snu.worst_pair
    assert su.c0_minimal == pytest.approx(t * base.c0_minimal, rel=1e-12)
    assert snu.c0_minimal == pytest.approx(base.c0_minimal / t, rel=1e-12)


def test_sobolev_path_example():
    sp = path_space(3)
    rep = check_sobolev_pointwise(sp, [0.0, 1.0, 2.0], np.ones(3), p=1.0, sigma=1.0)
    # every average of g is 1, so each pair gives |du| / (d (1 + 1)) = 1/2
    assert rep.c0_minimal == 0.5


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
def test_sobolev_homogeneity_in_g(p):
    sp = random_graph_space(10, 3)
    u = random_field(sp, 3)
    g = np.abs(random_field(sp, 4)) + 0.1
    a = check_sobolev_pointwise(sp, u, g, p, 2.0).c0_minimal
    b = check_sobolev_pointwise(sp, u, 2 * g, p, 2.0).c0_minimal
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_sobolev_preconditions(s2):
    with pytest.raises(SpaceError):
        check_sobolev_pointwise(s2, "u", [1.0, 1.0], p=0.0)
    with pytest.raises(SpaceError):
        check_sobolev_pointwise(s2, "u", [1.0, -1.0])


def test_density_measure(s2):
    assert measure_from_density(s2, [2.0, 0.5]).tolist() == [2.0, 0.5]


def test_level_and_threshold_indices_are_exact():
    for k in range(-30, 30):
        p = math.ldexp(1.0, k)
        assert level_index(p) == k
        assert level_index(p * (1 + 2**-52)) == k + 1
        assert level_index(p * 0.75) == k
        assert threshold_index(3 * p, 3.0) == k
        assert threshold_index(3 * p * (1 + 2**-52), 3.0) == k + 1


def test_s2_trace(s2):
    c = proof_constants(s2, 1.0, 1.0)
    assert (c.weak_type, c.doubling, c.s) == (2.0, 2.0, 2.0)
    assert c.final_constant == 2 * (c.base_constant + c.tail_constant)
    t = build_proof_trace(s2, "u", "nu", 1.0, 1.0, ball(s2, "a", 1.5))
    assert t.passed and set(t.verified) == set(FLAG_NAMES)
    counts = [lv.count for lv in t.levels]
    assert counts == sorted(counts) and counts[-1] == 2
    assert [lv.a for lv in t.levels] == sorted(lv.a for lv in t.levels)
    assert t.final_lhs == 2.0 and t.final_lhs <= 2 * t.level_sum <= t.final_rhs


def test_constant_field_trace_is_exactly_zero():
    sp, _, nu = dirac_grid(8)
    u = np.full(sp.n, 0.3)
    for r in (0.2, 0.5):
        t = build_proof_trace(sp, u, nu, 1.0, 2.0, ball(sp, 27, r))
        assert t.passed and all(lv.a == 0.0 for lv in t.levels) and t.final_lhs == 0.0


def test_trivial_trace_and_hypothesis_failure(s2):
    t = build_proof_trace(s2, "one", "zero", 1.0, 1.0, ball(s2, "a", 1.5))
    assert t.passed and t.k0 is None and t.levels == ()
    with pytest.raises(HypothesisError):
        build_proof_trace(s2, "u", "zero", 1.0, 1.0, ball(s2, "a", 1.5))


def test_pipeline_requires_length_metric():
    s = math.sqrt(2)
    sq = space_from_document(
        {
            "name": "sq",
            "metric": {"type": "matrix", "d": [[0, 1, s, 1], [1, 0, 1, s], [s, 1, 0, 1], [1, s, 1, 0]],
                       "edges": [[0, 1, 1], [1, 2, 1], [2, 3, 1], [3, 0, 1]]},
            "mu": [1, 1, 1, 1],
        }
    )
    with pytest.raises(SpaceError, match="length"):
        poincare_from_pointwise(sq, [0, 1, 2, 1], [1, 1, 1, 1], 10.0, 1.0)
    with pytest.raises(SpaceError, match="length"):
        build_proof_trace(sq, [0, 1, 2, 1], [1, 1, 1, 1], 10.0, 1.0, ball(sq, 0, 1.5))


def test_s2_certificate_matches_poincare_value(s2):
    cert = poincare_from_pointwise(s2, "u", "nu", 1.0, 1.0)
    assert cert.passed
    assert cert.overall_constant == check_ball_poincare(s2, "u", "nu", eta=3.0).minimal_constant
    assert cert.poincare.eta == 3.0 and len(cert.traces) == len(cert.poincare.constants)


def test_failed_hypothesis_reports_worst_pair(s2):
    with pytest.raises(HypothesisError) as info:
        poincare_from_pointwise(s2, "u", "nu", 0.5, 1.0)
    assert info.value.report.worst_pair == (0, 1)


def test_trace_sets_match_independent_recomputation():
    sp = grid_space(16)
    u = sample(sp, sine_bump)
    nu = variation_measure(sp, u, "grid")
    consts = proof_constants(sp, 1.0, 2.0)
    rep = check_ball_poincare(sp, u, nu, eta=consts.tau)
    k = int(np.argmax(rep.lhs))
    x0 = int(rep.centers[k])
    B = ball(sp, x0, trace_radius(sp, x0, float(rep.radii[k])))
    t = build_proof_trace(sp, u, nu, 1.0, 2.0, B, consts)
    assert t.passed
    lam = np.where(sp.dist[x0] < consts.tau * B.radius, nu, 0.0)
    m = np.array([brute_maximal(sp, lam, x, math.inf, measure=True) for x in B.members])
    assert np.allclose(m, t.maximal, rtol=1e-12)
    for lv in t.levels:
        assert lv.count == int((m <= math.ldexp(1.0, lv.k)).sum())
    lower, upper = t.k0_bounds
    assert lower <= 2.0**t.k0 <= upper


def test_traces_above_k0_are_exercised():
    sp, u, nu = dirac_grid(16)
    pw = check_pointwise(sp, u, nu, 2.0)
    cert = poincare_from_pointwise(sp, u, nu, pw.c0_minimal, 2.0)
    assert cert.passed
    above = [t for t in cert.traces if t.levels and t.levels[-1].k > t.k0]
    assert above, "the point mass should push some level windows above k0"
    for t in above:
        for lv in t.levels:
            if lv.k > t.k0:
                assert lv.reach < lv.r <= 2 * t.radius


def test_stored_flags_are_recomputable():
    sp, u, nu = dirac_grid(8)
    consts = proof_constants(sp, 1.0, 2.0)
    for x0, r in ((0, 0.3), (27, 0.6), (40, 1.0)):
        t = build_proof_trace(sp, u, nu, 1.0, 2.0, ball(sp, x0, r), consts)
        flags = trace_flags(t, consts)
        flags["lipschitz"] = t.verified["lipschitz"]
        assert flags == t.verified

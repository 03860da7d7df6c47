from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bvpoint.generators import path_space, random_euclidean_space, random_graph_space
from bvpoint.space import (
    SpaceError,
    ball,
    candidate_radii,
    load_space,
    shortest_paths,
    space_from_document,
    space_to_document,
    validate_metric,
)


def test_s2_document_loads(s2):
    assert s2.n == 2
    assert s2.labels == ("a", "b")
    assert s2.dist[0, 1] == 1.0
    assert s2.length_metric and s2.graph_backed
    assert list(s2.functions["u"]) == [0.0, 2.0]


def test_matrix_s2():
    sp = space_from_document({"name": "S2", "metric": {"type": "matrix", "d": [[0, 1], [1, 0]]}, "mu": [1, 1]})
    assert sp.n == 2 and not sp.graph_backed


@pytest.mark.parametrize(
    "doc, fragment",
    [
        ({"name": "x", "metric": {"type": "matrix", "d": [[0, 1], [2, 0]]}, "mu": [1, 1]}, "symmetric"),
        ({"name": "x", "metric": {"type": "matrix", "d": [[0, 0], [0, 0]]}, "mu": [1, 1]}, "positive"),
        ({"name": "x", "metric": {"type": "matrix", "d": [[0, 1], [1, 0]]}, "mu": [1, 0]}, "mu"),
        (
            {"name": "x", "metric": {"type": "matrix", "d": [[0, 1, 5], [1, 0, 1], [5, 1, 0]]}, "mu": [1, 1, 1]},
            "triangle",
        ),
        ({"name": "x", "metric": {"type": "graph", "n": 3, "edges": [[0, 1, 1.0]]}, "mu": [1, 1, 1]}, "connected"),
        ({"name": "x", "metric": {"type": "graph", "n": 2, "edges": [[0, 1, -1.0]]}, "mu": [1, 1]}, "positive"),
        ({"name": "x", "metric": {"type": "cube"}, "mu": [1]}, "unknown metric"),
    ],
)
def test_invalid_documents(doc, fragment):
    with pytest.raises(SpaceError, match=fragment):
        space_from_document(doc)


def test_validate_metric_accepts_roundoff():
    d = shortest_paths(3, [(0, 1, 0.1), (1, 2, 0.2)])
    validate_metric(d)
    assert d[0, 2] == pytest.approx(0.3)


def test_open_balls_on_s2(s2):
    assert ball(s2, "a", 1.0).members == (0,)
    assert ball(s2, "a", 1.5).members == (0, 1)
    with pytest.raises(SpaceError):
        ball(s2, "a", 0.0)


def test_candidate_radii_on_s2(s2):
    assert candidate_radii(s2, "a", 1.0) == [0.0]
    assert candidate_radii(s2, "a", 2.0) == [0.0, 1.0]
    with pytest.raises(SpaceError):
        candidate_radii(s2, "a", -1.0)


def test_ball_matches_scan_on_random_space():
    sp = random_euclidean_space(10, seed=3)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = int(rng.integers(10))
        r = float(rng.uniform(0.01, 1.5))
        assert ball(sp, x, r).members == tuple(y for y in range(10) if sp.dist[x, y] < r)


def dense_ball_family(sp, x, R):
    """Every distinct open ball B(x, r), 0 < r <= R, over a dense radius grid
    that also contains all distances and their midpoints."""
    d = np.unique(sp.dist[x])
    pts = np.concatenate([d, (d[1:] + d[:-1]) / 2, np.linspace(1e-9, R, 400), [R]])
    pts = pts[(pts > 0) & (pts <= R)]
    return {tuple(np.flatnonzero(sp.dist[x] < r)) for r in pts}


@pytest.mark.parametrize("seed", range(8))
def test_candidate_radii_realize_exactly_the_ball_family(seed):
    sp = random_graph_space(25, seed)
    for x in range(0, 25, 4):
        for R in (0.3, 1.0, float(sp.diameter), float(sp.dist[x].max())):
            fam = {tuple(np.flatnonzero(sp.dist[x] <= t)) for t in candidate_radii(sp, x, R)}
            assert fam == dense_ball_family(sp, x, R)
            assert candidate_radii(sp, x, R)[0] == 0.0


@given(st.integers(0, 30), st.floats(0.01, 3.0), st.floats(0.01, 3.0))
def test_balls_are_nested(seed, r1, r2):
    sp = random_graph_space(12, seed)
    lo, hi = sorted((r1, r2))
    for x in range(sp.n):
        assert set(ball(sp, x, lo).members) <= set(ball(sp, x, hi).members)


def test_load_is_deterministic(s2_doc):
    a = load_space(json.dumps(s2_doc))
    b = load_space(s2_doc)
    assert np.array_equal(a.dist, b.dist) and np.array_equal(a.mass, b.mass)
    assert a.dist.tobytes() == b.dist.tobytes()


def test_document_round_trip():
    sp = random_graph_space(15, seed=4)
    again = space_from_document(space_to_document(sp))
    assert np.array_equal(again.dist, sp.dist)
    assert np.array_equal(again.mass, sp.mass)
    assert again.edges == sp.edges


def test_matrix_with_edges_records_length_metric():
    # unit square 4-cycle: Euclidean diagonals are shorter than graph paths
    s = np.sqrt(2)
    d = [[0, 1, s, 1], [1, 0, 1, s], [s, 1, 0, 1], [1, s, 1, 0]]
    edges = [[0, 1, 1], [1, 2, 1], [2, 3, 1], [3, 0, 1]]
    sp = space_from_document({"name": "sq", "metric": {"type": "matrix", "d": d, "edges": edges}, "mu": [1] * 4})
    assert sp.graph_backed and not sp.length_metric


def test_field_and_measure_validation(s2):
    with pytest.raises(SpaceError):
        s2.scalar_field([1.0])
    with pytest.raises(SpaceError):
        s2.point_measure([1.0, -1.0])
    with pytest.raises(SpaceError):
        s2.scalar_field("missing")
    with pytest.raises(SpaceError):
        s2.index("c")


def test_path_space_distances():
    sp = path_space(5, 0.5)
    assert sp.dist[0, 4] == 2.0
    assert sp.mass.tolist() == [0.5] * 5

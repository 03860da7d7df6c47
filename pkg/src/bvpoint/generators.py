"""Seeded space builders for tests, examples and sweeps."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .space import MetricMeasureSpace, space_from_document


def _graph_doc(name, n, edges, mass, **extra):
    doc = {"name": name, "metric": {"type": "graph", "n": n, "edges": edges}, "mu": list(map(float, mass))}
    doc.update(extra)
    return doc


def path_space(n: int, step: float = 1.0, name: str | None = None) -> MetricMeasureSpace:
    """Points ``0, step, ..., (n-1) step`` joined in a path, each of mass ``step``."""
    edges = [[i, i + 1, float(step)] for i in range(n - 1)]
    return space_from_document(_graph_doc(name or f"path{n}", n, edges, [step] * n))


def cycle_space(n: int, name: str | None = None) -> MetricMeasureSpace:
    edges = [[i, (i + 1) % n, 1.0] for i in range(n)]
    return space_from_document(_graph_doc(name or f"cycle{n}", n, edges, [1.0] * n))


def grid_document(n1: int, n2: int | None = None, extent: float = 1.0, name: str | None = None) -> dict:
    """Cell-centred ``n1 x n2`` sample of ``[0, extent]^2`` with 4-neighbour edges.

    Masses are cell areas, so ``mu`` approximates Lebesgue measure.
    """
    n2 = n1 if n2 is None else n2
    h1, h2 = extent / n1, extent / n2
    edges = []
    for i in range(n1):
        for j in range(n2):
            k = i * n2 + j
            if i + 1 < n1:
                edges.append([k, k + n2, h1])
            if j + 1 < n2:
                edges.append([k, k + 1, h2])
    doc = _graph_doc(name or f"grid{n1}x{n2}", n1 * n2, edges, [h1 * h2] * (n1 * n2))
    doc["grid"] = {"shape": [n1, n2], "spacing": [h1, h2], "origin": [h1 / 2, h2 / 2]}
    return doc


def grid_space(n1: int, n2: int | None = None, extent: float = 1.0, name: str | None = None) -> MetricMeasureSpace:
    return space_from_document(grid_document(n1, n2, extent, name))


def grid_coordinates(space: MetricMeasureSpace) -> tuple[np.ndarray, np.ndarray]:
    if space.grid is None:
        raise ValueError("space is not a grid sample")
    return space.grid.coordinates()


def sample(space: MetricMeasureSpace, f) -> np.ndarray:
    """Evaluate ``f(x, y)`` at the grid points."""
    x, y = grid_coordinates(space)
    return np.asarray(f(x, y), dtype=float)


def sine_bump(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def random_euclidean_space(n: int, seed: int, dim: int = 2) -> MetricMeasureSpace:
    """Random points in the unit cube with the Euclidean metric and random masses."""
    rng = np.random.default_rng(seed)
    pts = rng.random((n, dim))
    d = cdist(pts, pts)
    mass = rng.uniform(0.2, 2.0, n)
    return space_from_document(
        {"name": f"euclid{n}-{seed}", "metric": {"type": "matrix", "d": d.tolist()}, "mu": mass.tolist()}
    )


def random_graph_space(n: int, seed: int, extra_edges: int | None = None) -> MetricMeasureSpace:
    """Random connected weighted graph: a random spanning tree plus extra edges."""
    rng = np.random.default_rng(seed)
    edges = _random_tree_edges(n, rng)
    have = {(min(i, j), max(i, j)) for i, j, _ in edges}
    extra = n // 2 if extra_edges is None else extra_edges
    tries = 0
    while extra > 0 and tries < 50 * n and n > 2:
        tries += 1
        i, j = (int(v) for v in rng.integers(0, n, 2))
        if i == j or (min(i, j), max(i, j)) in have:
            continue
        have.add((min(i, j), max(i, j)))
        edges.append([i, j, float(rng.uniform(0.1, 1.0))])
        extra -= 1
    mass = rng.uniform(0.2, 2.0, n)
    return space_from_document(_graph_doc(f"graph{n}-{seed}", n, edges, mass))


def random_tree_space(n: int, seed: int) -> MetricMeasureSpace:
    rng = np.random.default_rng(seed)
    edges = _random_tree_edges(n, rng)
    mass = rng.uniform(0.2, 2.0, n)
    return space_from_document(_graph_doc(f"tree{n}-{seed}", n, edges, mass))


def _random_tree_edges(n, rng):
    perm = rng.permutation(n)
    edges = []
    for k in range(1, n):
        parent = int(perm[rng.integers(0, k)])
        edges.append([parent, int(perm[k]), float(rng.uniform(0.1, 1.0))])
    return edges


def random_field(space: MetricMeasureSpace, seed: int, dyadic: bool = False) -> np.ndarray:
    """Random values; ``dyadic=True`` gives multiples of 1/1024 so shifts and
    power-of-two scalings are exact."""
    rng = np.random.default_rng(seed)
    if dyadic:
        return rng.integers(-2048, 2048, space.n) / 1024.0
    return rng.normal(size=space.n)


def random_measure(space: MetricMeasureSpace, seed: int, sparsity: float = 0.3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    w = rng.exponential(size=space.n)
    w[rng.random(space.n) < sparsity] = 0.0
    return w

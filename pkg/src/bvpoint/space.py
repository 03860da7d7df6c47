"""Finite metric measure spaces, open balls and document ingestion.

A space is a finite point set with a full distance matrix and strictly
positive point masses.  The metric is either given explicitly or induced by a
weighted graph (shortest-path lengths).  Balls are open:
``B(x, r) = {y : d(x, y) < r}``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

TRIANGLE_TOL = 1e-12


class SpaceError(ValueError):
    """Raised for malformed documents or data violating the space invariants."""


@dataclass(frozen=True)
class GridInfo:
    """Axis-aligned sample grid: point ``i * shape[1] + j`` sits at
    ``origin + (i * spacing[0], j * spacing[1])``."""

    shape: tuple[int, int]
    spacing: tuple[float, float]
    origin: tuple[float, float] = (0.0, 0.0)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        i, j = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
        x = self.origin[0] + i.ravel() * self.spacing[0]
        y = self.origin[1] + j.ravel() * self.spacing[1]
        return x, y


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    name: str
    labels: tuple[str, ...]
    dist: np.ndarray
    mass: np.ndarray
    edges: tuple[tuple[int, int, float], ...] | None = None
    grid: GridInfo | None = None
    # True when dist is the shortest-path metric of ``edges``
    length_metric: bool = False
    functions: Mapping[str, np.ndarray] = field(default_factory=dict)
    measures: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.mass)

    @property
    def graph_backed(self) -> bool:
        return self.edges is not None

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max())

    @cached_property
    def order(self) -> np.ndarray:
        """Row ``x`` lists all points sorted by distance from ``x`` (index breaks ties)."""
        o = np.argsort(self.dist, axis=1, kind="stable")
        o.setflags(write=False)
        return o

    @cached_property
    def sorted_dist(self) -> np.ndarray:
        s = np.take_along_axis(self.dist, self.order, axis=1)
        s.setflags(write=False)
        return s

    @cached_property
    def group_end(self) -> np.ndarray:
        """Mask of positions in ``sorted_dist`` that close a group of tied distances."""
        s = self.sorted_dist
        end = np.ones_like(s, dtype=bool)
        end[:, :-1] = s[:, :-1] != s[:, 1:]
        end.setflags(write=False)
        return end

    @cached_property
    def sorted_mass_cumsum(self) -> np.ndarray:
        c = np.cumsum(self.mass[self.order], axis=1)
        c.setflags(write=False)
        return c

    def index(self, point: int | str) -> int:
        if isinstance(point, (int, np.integer)):
            if not 0 <= point < self.n:
                raise SpaceError(f"point index {point} out of range")
            return int(point)
        try:
            return self.labels.index(point)
        except ValueError:
            raise SpaceError(f"unknown point label {point!r}") from None

    def scalar_field(self, values: Sequence[float] | np.ndarray | str) -> np.ndarray:
        """Validate a scalar field (one finite real per point)."""
        if isinstance(values, str):
            if values not in self.functions:
                raise SpaceError(f"unknown function {values!r}")
            return self.functions[values]
        u = np.asarray(values, dtype=float)
        if u.shape != (self.n,):
            raise SpaceError(f"field has shape {u.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(u)):
            raise SpaceError("field values must be finite")
        return u

    def point_measure(self, values: Sequence[float] | np.ndarray | str) -> np.ndarray:
        """Validate a point measure (one nonnegative finite mass per point)."""
        if isinstance(values, str):
            if values not in self.measures:
                raise SpaceError(f"unknown measure {values!r}")
            return self.measures[values]
        w = self.scalar_field(values)
        if np.any(w < 0):
            raise SpaceError("measure masses must be nonnegative")
        return w

    def with_metric(self, dist: np.ndarray, length_metric: bool) -> "MetricMeasureSpace":
        d = np.array(dist, dtype=float)
        d.setflags(write=False)
        return replace(self, dist=d, length_metric=length_metric)


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: tuple[int, ...]

    def __contains__(self, point: int) -> bool:
        return point in self.members

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[list(self.members)] = True
        return m


def ball(space: MetricMeasureSpace, center: int | str, r: float) -> Ball:
    """Open ball ``{y : d(center, y) < r}``."""
    if not r > 0:
        raise SpaceError(f"ball radius must be positive, got {r}")
    c = space.index(center)
    members = np.flatnonzero(space.dist[c] < r)
    return Ball(c, float(r), tuple(int(i) for i in members))


def candidate_radii(space: MetricMeasureSpace, center: int | str, R: float) -> list[float]:
    """Distinct distances from ``center`` strictly below ``R``, ascending.

    Every open ball ``B(center, r)`` with ``0 < r <= R`` equals
    ``{y : d(center, y) <= t}`` for exactly one ``t`` in the returned list.
    """
    if not R > 0:
        raise SpaceError(f"R must be positive, got {R}")
    c = space.index(center)
    if math.isinf(R):
        R = space.diameter + 1.0
    s = space.sorted_dist[c]
    ends = space.group_end[c] & (s < R)
    return [float(t) for t in s[ends]]


def shortest_paths(n: int, edges: Sequence[tuple[int, int, float]]) -> np.ndarray:
    if not edges:
        if n == 1:
            return np.zeros((1, 1))
        raise SpaceError("graph is disconnected")
    i, j, w = (np.array(c) for c in zip(*edges))
    # coo->csr would sum parallel edges; keep the shortest one instead
    g = _min_duplicates(n, i.astype(int), j.astype(int), w.astype(float))
    ncomp, _ = connected_components(g, directed=False)
    if ncomp != 1:
        raise SpaceError(f"graph is disconnected ({ncomp} components)")
    d = shortest_path(g, method="D", directed=False)
    return np.minimum(d, d.T)


def _min_duplicates(n, i, j, w):
    best: dict[tuple[int, int], float] = {}
    for a, b, length in zip(i.tolist(), j.tolist(), w.tolist()):
        key = (min(a, b), max(a, b))
        if key not in best or length < best[key]:
            best[key] = length
    keys = sorted(best)
    rows = [k[0] for k in keys]
    cols = [k[1] for k in keys]
    vals = [best[k] for k in keys]
    return coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def validate_metric(d: np.ndarray, tol: float = TRIANGLE_TOL) -> None:
    n = d.shape[0]
    if d.ndim != 2 or d.shape != (n, n):
        raise SpaceError("distance matrix must be square")
    if not np.all(np.isfinite(d)):
        raise SpaceError("distances must be finite")
    if np.any(np.diag(d) != 0):
        raise SpaceError("distance matrix must have zero diagonal")
    if not np.array_equal(d, d.T):
        raise SpaceError("distance matrix must be symmetric")
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] <= 0):
        raise SpaceError("distinct points must have positive distance")
    for k in range(n):
        excess = d - (d[:, k][:, None] + d[k, :][None, :])
        if excess.max() > tol:
            i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
            raise SpaceError(
                f"triangle inequality fails: d({i},{j}) = {d[i, j]} > d({i},{k}) + d({k},{j}) = {d[i, k] + d[k, j]}"
            )


def _parse_edges(raw: Any, n: int) -> tuple[tuple[int, int, float], ...]:
    if not isinstance(raw, list):
        raise SpaceError("edges must be a list of [i, j, length]")
    edges = []
    for e in raw:
        if not (isinstance(e, list) and len(e) == 3):
            raise SpaceError(f"malformed edge {e!r}")
        i, j, length = e
        if not (isinstance(i, int) and isinstance(j, int)) or isinstance(i, bool) or isinstance(j, bool):
            raise SpaceError(f"edge endpoints must be integers: {e!r}")
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise SpaceError(f"invalid edge endpoints {e!r}")
        length = float(length)
        if not (math.isfinite(length) and length > 0):
            raise SpaceError(f"edge length must be positive: {e!r}")
        edges.append((i, j, length))
    return tuple(edges)


def _number_list(raw: Any, n: int, what: str) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != n:
        raise SpaceError(f"{what} must be a list of {n} numbers")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw):
        raise SpaceError(f"{what} must contain only numbers")
    a = np.array(raw, dtype=float)
    if not np.all(np.isfinite(a)):
        raise SpaceError(f"{what} must be finite")
    a.setflags(write=False)
    return a


def space_from_document(doc: Mapping[str, Any]) -> MetricMeasureSpace:
    """Build and validate a space from a parsed space document."""
    if not isinstance(doc, Mapping):
        raise SpaceError("space document must be a JSON object")
    for key in ("name", "metric", "mu"):
        if key not in doc:
            raise SpaceError(f"missing field {key!r}")
    name = doc["name"]
    if not isinstance(name, str):
        raise SpaceError("name must be a string")
    metric = doc["metric"]
    if not isinstance(metric, Mapping) or "type" not in metric:
        raise SpaceError("metric must be an object with a 'type'")
    mu_raw = doc["mu"]
    if not isinstance(mu_raw, list) or not mu_raw:
        raise SpaceError("mu must be a nonempty list")
    n = len(mu_raw)
    mass = _number_list(mu_raw, n, "mu")
    if np.any(mass <= 0):
        raise SpaceError("point masses must be strictly positive")

    edges = None
    if metric["type"] == "matrix":
        if "d" not in metric:
            raise SpaceError("matrix metric needs 'd'")
        rows = metric["d"]
        if not isinstance(rows, list) or len(rows) != n:
            raise SpaceError(f"distance matrix must have {n} rows")
        d = np.array([_number_list(r, n, "distance row") for r in rows])
        validate_metric(d)
        if "edges" in metric:
            edges = _parse_edges(metric["edges"], n)
            for i, j, length in edges:
                if length < d[i, j] - TRIANGLE_TOL:
                    raise SpaceError(f"edge ({i}, {j}) is shorter than the ambient distance {d[i, j]}")
            length_metric = bool(np.allclose(shortest_paths(n, edges), d, rtol=0, atol=TRIANGLE_TOL))
        else:
            length_metric = False
    elif metric["type"] == "graph":
        if metric.get("n", n) != n:
            raise SpaceError(f"graph n = {metric.get('n')} does not match len(mu) = {n}")
        edges = _parse_edges(metric.get("edges", []), n)
        d = shortest_paths(n, edges)
        length_metric = True
    else:
        raise SpaceError(f"unknown metric type {metric['type']!r}")
    d.setflags(write=False)

    labels = doc.get("labels")
    if labels is None:
        labels = [str(i) for i in range(n)]
    if not (isinstance(labels, list) and len(labels) == n and all(isinstance(s, str) for s in labels)):
        raise SpaceError(f"labels must be a list of {n} strings")
    if len(set(labels)) != n:
        raise SpaceError("labels must be distinct")

    grid = None
    if "grid" in doc:
        g = doc["grid"]
        try:
            shape = tuple(int(v) for v in g["shape"])
            spacing = tuple(float(v) for v in g["spacing"])
            origin = tuple(float(v) for v in g.get("origin", (0.0, 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise SpaceError(f"malformed grid tag: {exc}") from None
        if len(shape) != 2 or len(spacing) != 2 or len(origin) != 2:
            raise SpaceError("grid tag must be two-dimensional")
        if shape[0] * shape[1] != n or min(spacing) <= 0:
            raise SpaceError("grid shape/spacing inconsistent with the point set")
        grid = GridInfo(shape, spacing, origin)  # type: ignore[arg-type]

    functions = {}
    for key, vals in (doc.get("functions") or {}).items():
        functions[key] = _number_list(vals, n, f"function {key!r}")
    measures = {}
    for key, vals in (doc.get("measures") or {}).items():
        w = _number_list(vals, n, f"measure {key!r}")
        if np.any(w < 0):
            raise SpaceError(f"measure {key!r} has negative mass")
        measures[key] = w

    return MetricMeasureSpace(
        name=name,
        labels=tuple(labels),
        dist=d,
        mass=mass,
        edges=edges,
        grid=grid,
        length_metric=length_metric,
        functions=functions,
        measures=measures,
    )


def load_space(source: str | Path | Mapping[str, Any]) -> MetricMeasureSpace:
    """Load a space from a JSON path, JSON text, or an already parsed document."""
    if isinstance(source, Mapping):
        return space_from_document(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceError(f"invalid JSON: {exc}") from None
    return space_from_document(doc)


def space_to_document(space: MetricMeasureSpace, *, functions=None, measures=None) -> dict[str, Any]:
    """Inverse of :func:`space_from_document` (graph spaces keep their edge list)."""
    doc: dict[str, Any] = {"name": space.name}
    if space.edges is not None and space.length_metric and _is_graph_metric(space):
        metric: dict[str, Any] = {"type": "graph", "n": space.n}
    else:
        metric = {"type": "matrix", "d": space.dist.tolist()}
    if space.edges is not None:
        metric["edges"] = [[i, j, length] for i, j, length in space.edges]
    doc["metric"] = metric
    doc["mu"] = space.mass.tolist()
    doc["labels"] = list(space.labels)
    if space.grid is not None:
        doc["grid"] = {
            "shape": list(space.grid.shape),
            "spacing": list(space.grid.spacing),
            "origin": list(space.grid.origin),
        }
    funcs = dict(space.functions)
    funcs.update(functions or {})
    meas = dict(space.measures)
    meas.update(measures or {})
    if funcs:
        doc["functions"] = {k: np.asarray(v, dtype=float).tolist() for k, v in funcs.items()}
    if meas:
        doc["measures"] = {k: np.asarray(v, dtype=float).tolist() for k, v in meas.items()}
    return doc


def _is_graph_metric(space: MetricMeasureSpace) -> bool:
    return bool(np.array_equal(shortest_paths(space.n, space.edges), space.dist))

"""Discrete variation measures, upper gradients and Poincare-type checks."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import islice

import networkx as nx
import numpy as np

from ._parallel import pmap
from .space import Ball, MetricMeasureSpace, SpaceError

CHECK_RTOL = 1e-12
# values this close to the maximum count as ties; the first one is the witness
TIE_RTOL = 1e-12


def first_maximum(values: np.ndarray) -> int:
    """Index of the first entry within ``TIE_RTOL`` of the maximum.

    Mathematically tied extremes can differ in the last bit depending on
    summation order; picking the first of them keeps witnesses stable under
    shifts and rescalings.
    """
    top = values.max()
    if not np.isfinite(top):
        return int(np.argmax(values))
    return int(np.argmax(values >= top - TIE_RTOL * abs(top)))


def variation_measure(space: MetricMeasureSpace, u, mode: str = "graph") -> np.ndarray:
    """Discrete stand-in for ``||Du||`` as a point measure.

    ``graph``: every edge ``x ~ y`` of length ``l`` carries
    ``w |u(x) - u(y)| / l`` with ``w = (mu(x) + mu(y)) / 2``, split evenly
    between its endpoints.  ``grid``: finite-difference gradient magnitude
    times cell mass.
    """
    u = space.scalar_field(u)
    if mode == "graph":
        if not space.graph_backed:
            raise SpaceError("graph mode needs a graph-backed space")
        nu = np.zeros(space.n)
        for i, j, length in space.edges:
            c = 0.5 * (space.mass[i] + space.mass[j]) * abs(u[i] - u[j]) / length
            nu[i] += 0.5 * c
            nu[j] += 0.5 * c
        return nu
    if mode == "grid":
        if space.grid is None:
            raise SpaceError("grid mode needs a space tagged as a grid sample")
        U = u.reshape(space.grid.shape)
        parts = []
        for axis, h in enumerate(space.grid.spacing):
            if U.shape[axis] < 2:
                parts.append(np.zeros_like(U))
            else:
                parts.append(np.gradient(U, h, axis=axis))
        return np.hypot(*parts).ravel() * space.mass
    raise SpaceError(f"unknown variation mode {mode!r}")


def total_variation(space: MetricMeasureSpace, u, mode: str = "graph") -> float:
    nu = variation_measure(space, u, mode)
    return float(np.cumsum(nu)[-1])


@dataclass(frozen=True)
class UpperGradientResult:
    passed: bool
    paths_checked: int
    # (x, y, path, |u(x) - u(y)|, line integral of g); the violating path on
    # failure, the tightest checked path otherwise
    witness: tuple[int, int, tuple[int, ...], float, float] | None


def line_integral(space: MetricMeasureSpace, g: np.ndarray, path, lengths: dict) -> float:
    """Trapezoid rule along the edges of ``path``."""
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        total += lengths[min(a, b), max(a, b)] * 0.5 * (g[a] + g[b])
    return total


def upper_gradient_check(space: MetricMeasureSpace, u, g, path_budget: int = 64) -> UpperGradientResult:
    """Check ``|u(x) - u(y)| <= int_gamma g ds`` over simple paths.

    At most ``path_budget`` simple paths per pair are enumerated.
    """
    if not space.graph_backed:
        raise SpaceError("upper gradient check needs a graph-backed space")
    if path_budget < 1:
        raise SpaceError("path_budget must be a positive integer")
    u = space.scalar_field(u)
    g = space.scalar_field(g)
    if np.any(g < 0):
        raise SpaceError("upper gradient candidate must be nonnegative")
    lengths: dict[tuple[int, int], float] = {}
    for i, j, length in space.edges:
        key = (min(i, j), max(i, j))
        lengths[key] = min(length, lengths.get(key, np.inf))
    G = nx.Graph()
    G.add_nodes_from(range(space.n))
    G.add_edges_from(lengths)
    checked = 0
    tightest = None
    for x in range(space.n):
        for y in range(x + 1, space.n):
            osc = abs(u[x] - u[y])
            for path in islice(nx.all_simple_paths(G, x, y), path_budget):
                checked += 1
                integral = line_integral(space, g, path, lengths)
                w = (x, y, tuple(path), float(osc), float(integral))
                if osc > integral + CHECK_RTOL * max(osc, integral):
                    return UpperGradientResult(False, checked, w)
                if tightest is None or integral - osc < tightest[4] - tightest[3]:
                    tightest = w
    return UpperGradientResult(True, checked, tightest)


@dataclass(frozen=True, eq=False)
class PoincareReport:
    """Per-ball Poincare data.

    Row ``i`` describes the family of open balls ``B(center, r)`` with
    ``r`` decreasing to ``radius``: members ``{d <= radius}`` and dilated
    ball ``{d <= eta * radius}``.  The local constant ``lhs / rhs`` is the
    supremum of the required constant over that family.
    """

    eta: float
    normalized: bool
    centers: np.ndarray
    radii: np.ndarray
    sizes: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    constants: np.ndarray

    @property
    def minimal_constant(self) -> float:
        return float(self.constants.max()) if self.constants.size else 0.0

    @property
    def worst_index(self) -> int | None:
        return first_maximum(self.constants) if self.constants.size else None

    @property
    def worst_ball(self) -> dict | None:
        k = self.worst_index
        return None if k is None else self.row(k)

    def row(self, k: int) -> dict:
        return {
            "center": int(self.centers[k]),
            "radius": float(self.radii[k]),
            "size": int(self.sizes[k]),
            "lhs": float(self.lhs[k]),
            "rhs": float(self.rhs[k]),
            "constant": float(self.constants[k]),
        }

    @property
    def per_ball(self) -> list[dict]:
        return [self.row(k) for k in range(len(self.constants))]

    def holds(self, constant: float) -> bool:
        if not np.isfinite(constant):
            return True
        bound = constant * self.rhs
        return bool(np.all(self.lhs <= bound + CHECK_RTOL * np.abs(bound)))


def _ratio(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # 0/0 -> 0 and t/0 -> inf
    with np.errstate(divide="ignore", invalid="ignore"):
        c = lhs / rhs
    return np.where(lhs == 0, 0.0, np.where(rhs == 0, np.inf, c))


def _poincare_center(space, u, nu, eta, normalized, x):
    s, o = space.sorted_dist[x], space.order[x]
    radii = s[space.group_end[x] & (s > 0)]
    if normalized:
        radii = np.unique(np.concatenate([radii, radii / eta]))
    cm = space.sorted_mass_cumsum[x]
    m = space.mass[o]
    uo = u[o]
    cnt = np.searchsorted(s, radii, side="right")
    mu_b = cm[cnt - 1]
    u_b = u[x] + np.cumsum((uo - u[x]) * m)[cnt - 1] / mu_b
    dev = np.cumsum(np.abs(uo[None, :] - u_b[:, None]) * m[None, :], axis=1)
    lhs = dev[np.arange(len(radii)), cnt - 1]
    cnt_eta = np.searchsorted(s, eta * radii, side="right")
    nu_eta = np.cumsum(nu[o])[cnt_eta - 1]
    if normalized:
        lhs = lhs / mu_b
        rhs = radii * nu_eta / cm[cnt_eta - 1]
    else:
        rhs = radii * nu_eta
    return radii, cnt, lhs, rhs


def check_ball_poincare(
    space: MetricMeasureSpace, u, nu, eta: float = 1.0, normalized: bool = False, threads: int = 1
) -> PoincareReport:
    """Least constants in the ball-wise Poincare inequalities.

    Unnormalized: ``int_B |u - u_B| dmu <= C r nu(eta B)``.
    Normalized: ``avg_B |u - u_B| <= C r nu(eta B) / mu(eta B)``.
    Every realizable ball (all centers, all radius breakpoints) is tested.
    """
    if not eta >= 1:
        raise SpaceError(f"eta must be >= 1, got {eta}")
    u = space.scalar_field(u)
    nu = space.point_measure(nu)
    rows = pmap(lambda x: _poincare_center(space, u, nu, eta, normalized, x), range(space.n), threads)
    centers = np.concatenate([np.full(len(r[0]), x, dtype=int) for x, r in enumerate(rows)])
    radii, sizes, lhs, rhs = (np.concatenate([r[k] for r in rows]) for k in range(4))
    return PoincareReport(float(eta), normalized, centers, radii, sizes.astype(int), lhs, rhs, _ratio(lhs, rhs))


def ball_poincare_constant(space: MetricMeasureSpace, u, nu, B: Ball, eta: float = 1.0, normalized: bool = False):
    """``(lhs, rhs, lhs / rhs)`` for one open ball ``B`` and its dilation ``eta B``."""
    u = space.scalar_field(u)
    nu = space.point_measure(nu)
    idx = np.array(B.members)
    m = space.mass[idx]
    ref = u[B.center]
    u_b = ref + np.cumsum((u[idx] - ref) * m)[-1] / np.cumsum(m)[-1]
    lhs = float(np.cumsum(np.abs(u[idx] - u_b) * m)[-1])
    dil = space.dist[B.center] < eta * B.radius
    rhs = B.radius * float(np.cumsum(nu[dil])[-1])
    if normalized:
        lhs /= float(np.cumsum(m)[-1])
        rhs /= float(np.cumsum(space.mass[dil])[-1])
    return lhs, rhs, float(_ratio(np.array(lhs), np.array(rhs)))

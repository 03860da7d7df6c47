"""Doubling constants, length metrics and the geodesic ball-containment check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .space import Ball, MetricMeasureSpace, SpaceError, ball, shortest_paths

GEODESIC_TOL = 1e-12


@dataclass(frozen=True)
class DilationWitness:
    value: float
    center: int
    radius: float


def dilation_constant(space: MetricMeasureSpace, factor: float) -> DilationWitness:
    """Exact ``sup_{x, r>0} mu(B(x, factor*r)) / mu(B(x, r))``.

    ``mu(B(x, r))`` is constant for ``r`` in ``(a, b]`` with ``a, b``
    consecutive distances from ``x`` while ``mu(B(x, factor*r))`` grows with
    ``r``, so the supremum is attained at some ``r = b``.
    """
    best = DilationWitness(1.0, 0, space.diameter + 1.0 if space.n > 1 else 1.0)
    cm = space.sorted_mass_cumsum
    for x in range(space.n):
        s = space.sorted_dist[x]
        b = s[space.group_end[x] & (s > 0)]
        if b.size == 0:
            continue
        inner = cm[x][np.searchsorted(s, b, side="left") - 1]
        outer = cm[x][np.searchsorted(s, factor * b, side="left") - 1]
        ratio = outer / inner
        k = int(np.argmax(ratio))
        if ratio[k] > best.value:
            best = DilationWitness(float(ratio[k]), x, float(b[k]))
    return best


def doubling_constant(space: MetricMeasureSpace) -> float:
    """Least ``c_d`` with ``mu(B(x, 2r)) <= c_d mu(B(x, r))`` for all balls."""
    return dilation_constant(space, 2.0).value


@dataclass(frozen=True)
class DimensionAudit:
    s: float
    best_constant: float
    # (x, y, r, R) attaining the infimum; R is a right limit R -> R+
    witness: tuple[int, int, float, float] | None


def doubling_dimension(space: MetricMeasureSpace, audit: bool = False) -> float | DimensionAudit:
    """``s = log2 c_d``.

    With ``audit=True`` also sweeps every admissible ``(x, y, r, R)``
    (``y in B(x, R)``, ``0 < r <= R < diam``) and returns the best constant
    ``C`` in ``mu(B(y, r)) / mu(B(x, R)) >= C (r/R)^s``.
    """
    s = math.log2(doubling_constant(space))
    if not audit:
        return s
    best, witness = _dimension_constant(space, s)
    return DimensionAudit(s, best, witness)


def _dimension_constant(space: MetricMeasureSpace, s: float):
    # For fixed x and R in (a, a_next], mu(B(x, R)) = mu{d_x <= a} and the
    # quotient grows with R, so the infimum is the limit R -> a+.  For fixed R
    # the infimum over r sits at the right end of each r-interval: r = b for a
    # distance b <= a from y, or r = a itself.
    n = space.n
    sd, cm, diam = space.sorted_dist, space.sorted_mass_cumsum, space.diameter
    # mass_lt[y, j] = mu{d_y < sd[y, j]}
    mass_lt = np.empty_like(cm)
    for y in range(n):
        cnt = np.searchsorted(sd[y], sd[y], side="left")
        mass_lt[y] = np.where(cnt > 0, cm[y][np.maximum(cnt - 1, 0)], 0.0)
    best, witness = 1.0, None
    for x in range(n):
        ends = np.flatnonzero(space.group_end[x] & (sd[x] > 0) & (sd[x] < diam))
        for pos in ends:
            a = sd[x, pos]
            mu_R = cm[x, pos]
            ys = np.flatnonzero(space.dist[x] <= a)
            rows_d = sd[ys]
            ok = (rows_d > 0) & (rows_d <= a)
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(ok, mass_lt[ys] / mu_R * (a / rows_d) ** s, np.inf)
            at_a = np.array([space.mass[space.dist[y] < a].sum() for y in ys]) / mu_R
            k = np.unravel_index(int(np.argmin(vals)), vals.shape)
            if vals[k] < best:
                best, witness = float(vals[k]), (x, int(ys[k[0]]), float(rows_d[k]), float(a))
            j = int(np.argmin(at_a))
            if at_a[j] < best:
                best, witness = float(at_a[j]), (x, int(ys[j]), float(a), float(a))
    return best, witness


@dataclass(frozen=True)
class GeometryReport:
    doubling_constant: float
    doubling_dimension: float
    quasiconvexity_constant: float | None
    witness_center: int
    witness_radius: float


def geometry_report(space: MetricMeasureSpace) -> GeometryReport:
    w = dilation_constant(space, 2.0)
    q = quasiconvexity_constant(space) if space.graph_backed else None
    return GeometryReport(w.value, math.log2(w.value), q, w.center, w.radius)


def length_metric(space: MetricMeasureSpace) -> MetricMeasureSpace:
    """Replace the metric by shortest-path length along the space's edges."""
    if not space.graph_backed:
        raise SpaceError("length metric needs a graph-backed space")
    if space.length_metric:
        return space
    return space.with_metric(shortest_paths(space.n, space.edges), length_metric=True)


def quasiconvexity_constant(space: MetricMeasureSpace) -> float:
    """``max_{x != y} rho(x, y) / d(x, y)`` with ``rho`` the length metric."""
    if not space.graph_backed or space.length_metric or space.n == 1:
        return 1.0
    rho = shortest_paths(space.n, space.edges)
    off = ~np.eye(space.n, dtype=bool)
    return float(max(1.0, (rho[off] / space.dist[off]).max()))


def max_edge_length(space: MetricMeasureSpace) -> float:
    if not space.edges:
        return 0.0
    return max(length for _, _, length in space.edges)


@dataclass(frozen=True)
class LemmaResult:
    success: bool
    branch: str
    witness: Ball | None
    intersection: tuple[int, ...]
    slack: float
    message: str = ""


def check_geodesic_lemma(
    space: MetricMeasureSpace,
    x0: int,
    R: float,
    x: int,
    r: float,
    slack: float | None = None,
) -> LemmaResult:
    """Look for a ball of radius ``r/2 - slack`` inside ``B(x, r) & B(x0, R)``.

    Follows the two cases of the containment argument: if ``d(x, x0) < r/2``
    the ball ``B(x0, r/2)`` works outright; otherwise a point ``z`` roughly
    ``r/2`` along a geodesic from ``x`` towards ``x0`` is sought, both
    distance conditions holding to within ``slack``.
    """
    x0, x = space.index(x0), space.index(x)
    if slack is None:
        slack = max_edge_length(space)
    if slack < 0:
        raise SpaceError("slack must be nonnegative")
    if not R > 0 or not space.dist[x, x0] < R:
        raise SpaceError(f"point {x} is not in B({x0}, {R})")
    if not 0 < r <= 2 * R:
        raise SpaceError(f"need 0 < r <= 2R, got r = {r}, R = {R}")

    inter = (space.dist[x] < r) & (space.dist[x0] < R)
    inter_members = tuple(int(i) for i in np.flatnonzero(inter))
    dxx0 = space.dist[x, x0]

    if dxx0 < r / 2:
        w = ball(space, x0, r / 2)
        ok = bool(inter[list(w.members)].all())
        return LemmaResult(ok, "near", w, inter_members, slack, "" if ok else "B(x0, r/2) not contained")

    tol = slack + GEODESIC_TOL * max(1.0, dxx0, r)
    dev_x = np.abs(space.dist[x] - r / 2)
    dev_x0 = np.abs(space.dist[x0] - (dxx0 - r / 2))
    cand = np.flatnonzero((dev_x <= tol) & (dev_x0 <= tol) & inter)
    cand = cand[np.lexsort((cand, dev_x[cand] + dev_x0[cand]))]
    rho = r / 2 - slack
    for z in cand:
        members = space.dist[z] < rho if rho > 0 else np.zeros(space.n, dtype=bool)
        members[z] = True
        if not (members & ~inter).any():
            w = Ball(int(z), float(rho), tuple(int(i) for i in np.flatnonzero(members)))
            return LemmaResult(True, "far", w, inter_members, slack)
    return LemmaResult(False, "far", None, inter_members, slack, f"no witness among {len(cand)} candidates")


@dataclass(frozen=True)
class SmallBallCheck:
    lhs: float
    rhs: float
    holds: bool


def small_ball_check(
    space: MetricMeasureSpace, x0: int, R: float, x: int, r: float, c_d: float, s: float
) -> SmallBallCheck:
    """``mu(B(x, r) & B(x0, R)) >= mu(B(x0, R)) c_d^-2 (r / 2R)^s``."""
    inter = (space.dist[x] < r) & (space.dist[x0] < R)
    lhs = float(space.mass[inter].sum())
    mu_b = float(space.mass[space.dist[x0] < R].sum())
    rhs = mu_b * c_d**-2 * (r / (2 * R)) ** s
    return SmallBallCheck(lhs, rhs, lhs >= rhs)

"""Ball averages and restricted maximal operators on finite spaces.

Everything is built on per-center *ratio profiles*: for a center ``x`` sort
the points by distance, accumulate numerator and ``mu`` along that order, and
read off ``numerator(B) / mu(B)`` at the end of every group of tied
distances.  A running maximum of that sequence answers every restricted
maximal query ``sup_{0<r<=R}`` with one binary search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._parallel import chunks, pmap
from .geometry import DilationWitness, dilation_constant
from .space import Ball, MetricMeasureSpace, SpaceError

COVERING_DILATION = 5.0


def _sequential_sum(a: np.ndarray) -> float:
    # left-to-right accumulation; np.sum would use pairwise summation
    return float(np.cumsum(a)[-1]) if a.size else 0.0


def ball_average(space: MetricMeasureSpace, u, B: Ball) -> float:
    """Mass-weighted average of ``u`` over ``B`` in point-index order."""
    u = space.scalar_field(u)
    idx = np.array(B.members)
    ref = u[B.center]
    m = space.mass[idx]
    return float(ref + _sequential_sum((u[idx] - ref) * m) / _sequential_sum(m))


def ball_measure_ratio(space: MetricMeasureSpace, nu, B: Ball) -> float:
    nu = space.point_measure(nu)
    idx = np.array(B.members)
    return _sequential_sum(nu[idx]) / _sequential_sum(space.mass[idx])


@dataclass(frozen=True, eq=False)
class MaximalProfile:
    """Running maxima of ball ratios for every center.

    ``running[x, j]`` is the largest ratio over the balls
    ``{y : d(x, y) <= sorted_dist[x, i]}`` with ``i <= j``.
    """

    space: MetricMeasureSpace
    running: np.ndarray

    def _counts(self, x: int, R) -> np.ndarray:
        R = np.asarray(R, dtype=float)
        if np.any(~(R > 0)):
            raise SpaceError("maximal radius must be positive")
        return np.searchsorted(self.space.sorted_dist[x], R, side="left")

    def at(self, x: int, R) -> np.ndarray | float:
        """``M_R`` at center ``x`` for one radius or an array of radii (inf allowed)."""
        cnt = self._counts(x, R)
        out = self.running[x][cnt - 1]
        return float(out) if np.ndim(out) == 0 else out

    def values(self, R: float = math.inf) -> np.ndarray:
        return np.array([self.at(x, R) for x in range(self.space.n)])

    def unrestricted(self) -> np.ndarray:
        return self.running[:, -1].copy()


def _profile_rows(space: MetricMeasureSpace, num: np.ndarray, ref: np.ndarray | None, rows: range) -> np.ndarray:
    o = space.order[rows.start : rows.stop]
    cm = space.sorted_mass_cumsum[rows.start : rows.stop]
    if ref is None:
        ratio = np.cumsum(num[o], axis=1) / cm
    else:
        r = ref[rows.start : rows.stop, None]
        ratio = r + np.cumsum((num[o] - r) * space.mass[o], axis=1) / cm
    ratio[~space.group_end[rows.start : rows.stop]] = -np.inf
    return np.maximum.accumulate(ratio, axis=1)


def _profile(space, num, ref, threads):
    parts = pmap(lambda rows: _profile_rows(space, num, ref, rows), chunks(space.n, max(1, threads) * 4), threads)
    running = np.vstack(parts)
    running.setflags(write=False)
    return MaximalProfile(space, running)


def function_profile(space: MetricMeasureSpace, u, threads: int = 1) -> MaximalProfile:
    """Profile of ``|u|``-averages (the Hardy-Littlewood maximal function)."""
    a = np.abs(space.scalar_field(u))
    # centering each row on |u(x)| makes constant fields exact
    return _profile(space, a, a, threads)


def measure_profile(space: MetricMeasureSpace, nu, threads: int = 1) -> MaximalProfile:
    """Profile of ``nu(B) / mu(B)`` (the maximal function of a measure)."""
    return _profile(space, space.point_measure(nu), None, threads)


def restricted_maximal(space: MetricMeasureSpace, u, x, R: float) -> float:
    """``M_R u(x) = sup_{0<r<=R}`` average of ``|u|`` over ``B(x, r)``."""
    x = space.index(x)
    if not R > 0:
        raise SpaceError(f"R must be positive, got {R}")
    a = np.abs(space.scalar_field(u))
    s = space.sorted_dist[x]
    o = space.order[x]
    ref = a[x]
    ratio = ref + np.cumsum((a[o] - ref) * space.mass[o]) / space.sorted_mass_cumsum[x]
    ok = space.group_end[x] & (s < R)
    return float(ratio[ok].max())


def restricted_maximal_measure(space: MetricMeasureSpace, nu, x, R: float) -> float:
    """``M_{R,nu}(x) = sup_{0<r<=R} nu(B(x, r)) / mu(B(x, r))``."""
    x = space.index(x)
    if not R > 0:
        raise SpaceError(f"R must be positive, got {R}")
    w = space.point_measure(nu)
    s = space.sorted_dist[x]
    ratio = np.cumsum(w[space.order[x]]) / space.sorted_mass_cumsum[x]
    ok = space.group_end[x] & (s < R)
    return float(ratio[ok].max())


def maximal_function(space: MetricMeasureSpace, u, R: float = math.inf, threads: int = 1) -> np.ndarray:
    return function_profile(space, u, threads).values(R)


def maximal_function_measure(space: MetricMeasureSpace, nu, R: float = math.inf, threads: int = 1) -> np.ndarray:
    return measure_profile(space, nu, threads).values(R)


def weak_type_constant(space: MetricMeasureSpace) -> DilationWitness:
    """Covering constant ``C_w = sup mu(B(x, 5r)) / mu(B(x, r))``.

    The Vitali covering argument gives
    ``mu{M_nu > t} <= C_w nu(X) / t`` for every measure ``nu`` and ``t > 0``.
    """
    return dilation_constant(space, COVERING_DILATION)


def superlevel_mass(space: MetricMeasureSpace, values: np.ndarray, t: float) -> float:
    """``mu{x : values(x) > t}``."""
    return _sequential_sum(space.mass[np.asarray(values) > t])


@dataclass(frozen=True)
class WeakTypeCheck:
    t: float
    level_mass: float
    bound: float
    holds: bool


def check_weak_type(space: MetricMeasureSpace, nu, ts, constant: float | None = None) -> list[WeakTypeCheck]:
    """Check ``mu{M_nu > t} <= C_w nu(X) / t`` for each ``t`` in ``ts``."""
    nu = space.point_measure(nu)
    cw = weak_type_constant(space).value if constant is None else constant
    m = measure_profile(space, nu).unrestricted()
    total = _sequential_sum(nu)
    out = []
    for t in ts:
        if not t > 0:
            raise SpaceError("weak-type levels must be positive")
        lm = superlevel_mass(space, m, t)
        bound = cw * total / t
        out.append(WeakTypeCheck(float(t), lm, bound, lm <= bound))
    return out

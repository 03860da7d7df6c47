"""Pointwise maximal-function inequalities and the level-set construction that
turns them into ball-wise Poincare bounds.

Given ``u``, a finite measure ``nu`` and constants ``c0``, ``sigma`` with

    |u(x) - u(y)| <= c0 d(x, y) [M_{sigma d, nu}(x) + M_{sigma d, nu}(y)]

for all pairs, every ball ``B = B(x0, R)`` satisfies
``int_B |u - u_B| dmu <= C R nu(3 sigma B)``.  :func:`build_proof_trace`
replays the argument on one ball with every constant computed from the
space, and records each intermediate inequality it checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._parallel import chunks, pmap
from .geometry import doubling_constant
from .maximal import function_profile, measure_profile, weak_type_constant
from .space import Ball, MetricMeasureSpace, SpaceError, ball
from .variation import PoincareReport, check_ball_poincare, first_maximum

CHECK_RTOL = 1e-12
MIN_PROOF_DIMENSION = 2.0
AUDIT_ALL_MAX_N = 200
AUDIT_WORST = 32


class HypothesisError(SpaceError):
    """The pointwise hypothesis fails; ``report`` carries the worst pair."""

    def __init__(self, message: str, report: "PointwiseReport | None" = None):
        super().__init__(message)
        self.report = report


def leq(a: float, b: float) -> bool:
    """``a <= b`` up to relative rounding noise in ``b``."""
    return a <= b + CHECK_RTOL * abs(b)


def safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    # 0/0 -> 0, t/0 -> inf
    with np.errstate(divide="ignore", invalid="ignore"):
        q = num / den
    return np.where(num == 0, 0.0, np.where(den == 0, np.inf, q))


@dataclass(frozen=True, eq=False)
class PointwiseReport:
    sigma: float
    c0: float | None
    c0_minimal: float
    worst_pair: tuple[int, int] | None
    passed: bool
    p: float | None = None
    # maximal[x, y]: maximal term at x for the pair (x, y); cache only
    maximal: np.ndarray | None = field(default=None, repr=False)

    def pair_ratio(self, space: MetricMeasureSpace, u, x: int, y: int) -> float:
        u = space.scalar_field(u)
        den = space.dist[x, y] * (self.maximal[x, y] + self.maximal[y, x])
        return float(safe_ratio(np.array(abs(u[x] - u[y])), np.array(den)))


def _pair_terms(space: MetricMeasureSpace, profile, sigma: float, threads: int) -> np.ndarray:
    def rows(rs: range) -> np.ndarray:
        out = np.empty((len(rs), space.n))
        for k, x in enumerate(rs):
            R = sigma * space.dist[x]
            R[x] = math.inf
            out[k] = profile.at(x, R)
        return out

    return np.vstack(pmap(rows, chunks(space.n, max(1, threads) * 4), threads))


def _pair_report(space, u, terms, sigma, c0, p=None) -> PointwiseReport:
    n = space.n
    if n < 2:
        return PointwiseReport(sigma, c0, 0.0, None, True, p, terms)
    iu, ju = np.triu_indices(n, k=1)
    num = np.abs(u[iu] - u[ju])
    den = space.dist[iu, ju] * (terms[iu, ju] + terms[ju, iu])
    ratio = safe_ratio(num, den)
    k = first_maximum(ratio)
    c0_min = float(ratio.max())
    worst = (int(iu[k]), int(ju[k]))
    passed = math.isfinite(c0_min) if c0 is None else c0_min <= c0
    return PointwiseReport(sigma, c0, c0_min, worst, passed, p, terms)


def check_pointwise(
    space: MetricMeasureSpace, u, nu, sigma: float = 1.0, c0: float | None = None, threads: int = 1
) -> PointwiseReport:
    """Least ``c0`` in ``|u(x)-u(y)| <= c0 d [M_{sigma d,nu}(x) + M_{sigma d,nu}(y)]``.

    All pairs are checked (every point has positive mass, so there are no
    exceptional null sets).  With ``c0`` given, ``passed`` says whether it is
    large enough.
    """
    if not sigma >= 1:
        raise SpaceError(f"sigma must be >= 1, got {sigma}")
    if c0 is not None and not c0 > 0:
        raise SpaceError(f"c0 must be positive, got {c0}")
    u = space.scalar_field(u)
    terms = _pair_terms(space, measure_profile(space, nu, threads), sigma, threads)
    return _pair_report(space, u, terms, float(sigma), c0)


def check_sobolev_pointwise(
    space: MetricMeasureSpace,
    u,
    g,
    p: float = 1.0,
    sigma: float = 2.0,
    c0: float | None = None,
    threads: int = 1,
) -> PointwiseReport:
    """Least ``C`` in ``|u(x)-u(y)| <= C d [(M_{sigma d} g^p(x))^{1/p} + (M_{sigma d} g^p(y))^{1/p}]``.

    ``sigma`` is the full radius dilation (``2 tau`` for a Poincare dilation
    ``tau``).  ``p = inf`` uses the plain values ``g(x) + g(y)``.  With
    ``c0`` given, ``passed`` says whether it is large enough.
    """
    if not p > 0:
        raise SpaceError(f"p must be positive, got {p}")
    if not sigma >= 1:
        raise SpaceError(f"sigma must be >= 1, got {sigma}")
    u = space.scalar_field(u)
    g = space.scalar_field(g)
    if np.any(g < 0):
        raise SpaceError("g must be nonnegative")
    if c0 is not None and not c0 > 0:
        raise SpaceError(f"c0 must be positive, got {c0}")
    if math.isinf(p):
        terms = np.repeat(g[:, None], space.n, axis=1)
    else:
        terms = _pair_terms(space, function_profile(space, g**p, threads), sigma, threads) ** (1.0 / p)
    return _pair_report(space, u, terms, float(sigma), c0, float(p))


def measure_from_density(space: MetricMeasureSpace, g) -> np.ndarray:
    """The measure ``g dmu``."""
    g = space.scalar_field(g)
    if np.any(g < 0):
        raise SpaceError("density must be nonnegative")
    return g * space.mass


@dataclass(frozen=True)
class ProofConstants:
    """Space-level constants carried through the level-set construction."""

    c0: float
    sigma: float
    weak_type: float  # C_w, covering constant
    doubling: float  # c_d
    dimension: float  # log2 c_d
    s: float  # exponent used in the radii, max(log2 c_d, 2) > 1

    @property
    def tau(self) -> float:
        return 3.0 * self.sigma

    @property
    def k0_constant(self) -> float:
        # 2^k0 < 2 C_w lam / mu(B) <= 2 C_w c_d^ceil(log2 tau) lam / mu(tau B)
        return 2.0 * self.weak_type * self.doubling ** math.ceil(math.log2(self.tau))

    @property
    def base_constant(self) -> float:
        # a_k0 <= c0 2^(k0+1) 2R <= 4 c0 C_k0 R lam / mu(tau B)
        return 4.0 * self.c0 * self.k0_constant

    @property
    def iteration_constant(self) -> float:
        # sum_{i<=k} c0 2^(i+1) r_i <= K R (lam/mu(B))^(1/s) 2^(k(1-1/s))
        s = self.s
        return 4.0 * self.c0 * (2.0 * self.weak_type) ** (1 / s) / (1 - 2 ** -(1 - 1 / s))

    @property
    def tail_constant(self) -> float:
        s = self.s
        return 2.0 * self.iteration_constant * self.weak_type ** (1 - 1 / s) * 2 ** (-1 / s) / (1 - 2 ** (-1 / s))

    @property
    def final_constant(self) -> float:
        return 2.0 * (self.base_constant + self.tail_constant)

    def as_dict(self) -> dict:
        return {
            "c0": self.c0,
            "sigma": self.sigma,
            "tau": self.tau,
            "weak_type": self.weak_type,
            "doubling": self.doubling,
            "dimension": self.dimension,
            "s": self.s,
            "k0_constant": self.k0_constant,
            "base_constant": self.base_constant,
            "iteration_constant": self.iteration_constant,
            "tail_constant": self.tail_constant,
            "final_constant": self.final_constant,
        }


def proof_constants(space: MetricMeasureSpace, c0: float, sigma: float) -> ProofConstants:
    cd = doubling_constant(space)
    dim = math.log2(cd)
    return ProofConstants(
        c0=float(c0),
        sigma=float(sigma),
        weak_type=weak_type_constant(space).value,
        doubling=cd,
        dimension=dim,
        s=max(dim, MIN_PROOF_DIMENSION),
    )


@dataclass(frozen=True)
class Level:
    k: int
    count: int  # |E_k|
    mass: float  # mu(E_k)
    a: float  # sup_{E_k} |u - shift|
    r: float  # r_k
    reach: float  # max_{x in E_k} dist(x, E_{k-1}); inf if E_{k-1} is empty


FLAG_NAMES = (
    "nested",
    "radii_decreasing",
    "lipschitz",
    "weak_type",
    "connecting",
    "iteration",
    "claim_k0",
    "base",
    "level_sum",
    "final",
)


@dataclass(frozen=True, eq=False)
class ProofTrace:
    center: int
    radius: float
    members: tuple[int, ...]
    tau: float
    lambda_total: float
    mu_ball: float
    mu_tau_ball: float
    maximal: tuple[float, ...]  # M_lambda on the members
    level_of: tuple[int, ...]  # least k with M_lambda <= 2^k, per member
    k0: int | None
    shift_point: int | None
    shift: float
    levels: tuple[Level, ...]
    k0_bounds: tuple[float, float] | None  # lower and upper bound on 2^k0
    a_k0_bound: float
    level_sum: float  # sum_k a_k mu(E_k \ E_{k-1})
    final_lhs: float
    final_rhs: float
    verified: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.verified.values())

    def level(self, k: int) -> Level:
        for lv in self.levels:
            if lv.k == k:
                return lv
        raise KeyError(k)


def level_index(m: float) -> int:
    """Least integer ``k`` with ``m <= 2^k`` (``m > 0``), using exact powers of two."""
    k = math.ceil(math.log2(m))
    while m > math.ldexp(1.0, k):
        k += 1
    while m <= math.ldexp(1.0, k - 1):
        k -= 1
    return k


def threshold_index(q: float, mu_b: float) -> int:
    """Least integer ``k`` with ``q / 2^k <= mu_b``."""
    k = math.ceil(math.log2(q / mu_b))
    while q > math.ldexp(mu_b, k):
        k += 1
    while q <= math.ldexp(mu_b, k - 1):
        k -= 1
    return k


def unrestricted_measure_maximal(space: MetricMeasureSpace, lam: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Unrestricted ``M_lambda`` at ``points``."""
    o = space.order[points]
    ratio = np.cumsum(lam[o], axis=1) / space.sorted_mass_cumsum[points]
    ratio[~space.group_end[points]] = -np.inf
    return ratio.max(axis=1)


def proof_radius(R: float, consts: ProofConstants, lam: float, mu_b: float, k: int) -> float:
    """``r_k = 2R (C_w lam / (2^{k-1} mu(B)))^{1/s}``."""
    return 2 * R * (consts.weak_type * lam / (math.ldexp(1.0, k - 1) * mu_b)) ** (1 / consts.s)


def build_proof_trace(
    space: MetricMeasureSpace, u, nu, c0: float, sigma: float, B: Ball, consts: ProofConstants | None = None
) -> ProofTrace:
    """Run the level-set construction on ``B = B(x0, R)``.

    ``lambda = nu`` restricted to ``tau B`` (``tau = 3 sigma``),
    ``E_k = {x in B : M_lambda(x) <= 2^k}``, ``a_k = sup_{E_k} |u - shift|``
    where the shift zeroes ``|u|`` at a point of ``E_{k0}``, and
    ``r_k = 2R (C_w lambda(tau B) / (2^{k-1} mu(B)))^{1/s}``.
    """
    if not space.length_metric:
        raise SpaceError("the construction needs a length-metric space; apply geometry.length_metric first")
    u = space.scalar_field(u)
    nu = space.point_measure(nu)
    if consts is None:
        consts = proof_constants(space, c0, sigma)
    x0, R = B.center, B.radius
    tau = consts.tau
    members = np.array(B.members)
    in_tau = space.dist[x0] < tau * R
    lam = np.where(in_tau, nu, 0.0)
    lam_total = float(np.cumsum(lam)[-1])
    mass_b = space.mass[members]
    mu_b = float(np.cumsum(mass_b)[-1])
    mu_tau = float(np.cumsum(space.mass[in_tau])[-1])
    ref = u[x0]
    u_b = ref + np.cumsum((u[members] - ref) * mass_b)[-1] / mu_b
    final_lhs = float(np.cumsum(np.abs(u[members] - u_b) * mass_b)[-1])

    if lam_total == 0:
        if np.any(u[members] != u[members[0]]):
            raise HypothesisError(f"nu vanishes on tau B around ball ({x0}, {R}) but u is not constant on B")
        flags = {name: True for name in FLAG_NAMES}
        return ProofTrace(
            x0, R, B.members, tau, 0.0, mu_b, mu_tau, (), (), None, None, 0.0, (), None, 0.0, 0.0, final_lhs, 0.0, flags
        )

    m_lam = unrestricted_measure_maximal(space, lam, members)
    lvl = np.array([level_index(float(m)) for m in m_lam])
    k0 = threshold_index(consts.weak_type * lam_total, mu_b)
    k_lo = min(int(lvl.min()), k0)
    k_hi = max(int(lvl.max()), k0)

    e_k0 = lvl <= k0
    if e_k0.any():
        cand = np.flatnonzero(e_k0)
        p = int(cand[np.argmin(np.abs(u[members[cand]]))])
        shift_point, shift = int(members[p]), float(u[members[p]])
    else:
        shift_point, shift = None, 0.0
    v = np.abs(u[members] - shift)

    # reach: distance from each member to the nearest member of E_{k-1}, via
    # the running minimum of levels along each member's distance order
    big = np.iinfo(np.int64).max
    full_level = np.full(space.n, big, dtype=np.int64)
    full_level[members] = lvl
    nearest_level = np.minimum.accumulate(full_level[space.order[members]], axis=1)
    sd_b = space.sorted_dist[members]
    levels = []
    for k in range(k_lo, k_hi + 1):
        e = lvl <= k
        a = float(v[e].max()) if e.any() else 0.0
        if not e.any():
            reach = 0.0
        elif not (lvl <= k - 1).any():
            reach = math.inf
        else:
            rows = np.flatnonzero(e)
            first = (nearest_level[rows] <= k - 1).argmax(axis=1)
            reach = float(sd_b[rows, first].max())
        levels.append(
            Level(
                k=k,
                count=int(e.sum()),
                mass=float(np.cumsum(mass_b[e])[-1]) if e.any() else 0.0,
                a=a,
                r=float(proof_radius(R, consts, lam_total, mu_b, k)),
                reach=reach,
            )
        )

    d_b = space.dist[np.ix_(members, members)]
    pair_level = np.maximum(lvl[:, None], lvl[None, :])
    lip_bound = consts.c0 * np.ldexp(1.0, pair_level + 1) * d_b
    du = np.abs(u[members][:, None] - u[members][None, :])
    lipschitz = bool(np.all(du <= lip_bound + CHECK_RTOL * lip_bound))

    trace = ProofTrace(
        center=x0,
        radius=R,
        members=B.members,
        tau=tau,
        lambda_total=lam_total,
        mu_ball=mu_b,
        mu_tau_ball=mu_tau,
        maximal=tuple(float(m) for m in m_lam),
        level_of=tuple(int(k) for k in lvl),
        k0=k0,
        shift_point=shift_point,
        shift=shift,
        levels=tuple(levels),
        k0_bounds=(lam_total / (consts.k0_constant * mu_tau), consts.k0_constant * lam_total / mu_tau),
        a_k0_bound=consts.base_constant * R * lam_total / mu_tau,
        level_sum=_level_sum(levels),
        final_lhs=final_lhs,
        final_rhs=consts.final_constant * R * lam_total,
        verified={},
    )
    flags = trace_flags(trace, consts)
    flags["lipschitz"] = lipschitz
    return replace(trace, verified={name: flags[name] for name in FLAG_NAMES})


def _level_sum(levels) -> float:
    total, prev_mass = 0.0, 0.0
    for lv in levels:
        total += lv.a * (lv.mass - prev_mass)
        prev_mass = lv.mass
    return total


def trace_flags(trace: ProofTrace, consts: ProofConstants) -> dict[str, bool]:
    """Every checkable inequality of a trace, from the trace's stored numbers.

    The Lipschitz flag needs ``u`` and the metric and is computed by the
    caller; here it is reported as ``True``.
    """
    if trace.k0 is None:
        return {name: True for name in FLAG_NAMES}
    lv = trace.levels
    R, lam, mu_b, mu_tau, k0, s = trace.radius, trace.lambda_total, trace.mu_ball, trace.mu_tau_ball, trace.k0, consts.s
    flags = {"lipschitz": True}
    flags["nested"] = all(
        lv[i - 1].count <= lv[i].count and lv[i - 1].mass <= lv[i].mass and lv[i - 1].a <= lv[i].a
        for i in range(1, len(lv))
    ) and lv[-1].count == len(trace.members)
    flags["radii_decreasing"] = all(lv[i].r < lv[i - 1].r for i in range(1, len(lv)))
    flags["weak_type"] = all(
        leq(mu_b - (lv[i - 1].mass if i > 0 else 0.0), consts.weak_type * lam / math.ldexp(1.0, lv[i].k - 1))
        for i in range(len(lv))
    )
    connecting = True
    iteration = True
    a_k0 = trace.level(k0).a
    for i, level in enumerate(lv):
        if level.k <= k0:
            continue
        prev = lv[i - 1]
        connecting &= level.r <= 2 * R and level.reach < level.r
        iteration &= leq(level.a, prev.a + consts.c0 * math.ldexp(1.0, level.k + 1) * level.r)
        iteration &= leq(level.a, a_k0 + consts.iteration_constant * R * (lam / mu_b) ** (1 / s) * 2 ** (level.k * (1 - 1 / s)))
    flags["connecting"] = bool(connecting) and trace.level(k0).count > 0
    flags["iteration"] = bool(iteration)
    two_k0 = math.ldexp(1.0, k0)
    lower, upper = trace.k0_bounds
    flags["claim_k0"] = (
        leq(consts.weak_type * lam, math.ldexp(mu_b, k0))
        and consts.weak_type * lam > math.ldexp(mu_b, k0 - 1)
        and leq(lower, two_k0)
        and leq(two_k0, upper)
    )
    flags["base"] = leq(a_k0, consts.c0 * math.ldexp(1.0, k0 + 1) * 2 * R) and leq(a_k0, trace.a_k0_bound)
    flags["level_sum"] = leq(trace.final_lhs, 2 * trace.level_sum) and leq(2 * trace.level_sum, trace.final_rhs)
    flags["final"] = leq(trace.final_lhs, trace.final_rhs)
    return flags


@dataclass(frozen=True, eq=False)
class CharacterizationCertificate:
    pointwise: PointwiseReport
    poincare: PoincareReport
    constants: ProofConstants
    traces: tuple[ProofTrace, ...]
    trace_rows: tuple[int, ...]  # poincare row audited by each trace

    @property
    def overall_constant(self) -> float:
        return self.poincare.minimal_constant

    @property
    def passed(self) -> bool:
        return (
            self.pointwise.passed
            and math.isfinite(self.overall_constant)
            and self.poincare.holds(self.overall_constant)
            and all(t.passed for t in self.traces)
        )


def trace_radius(space: MetricMeasureSpace, center: int, t: float) -> float:
    """A radius ``R`` with ``B(center, R) = {d <= t}``: midway to the next distance."""
    s = space.sorted_dist[center]
    above = s[s > t]
    nxt = float(above[0]) if above.size else 2.0 * t
    return 0.5 * (t + nxt)


def select_audit_rows(report: PoincareReport, n: int, audit: str | int = "auto") -> list[int]:
    rows = len(report.constants)
    if audit == "all" or (audit == "auto" and n <= AUDIT_ALL_MAX_N):
        return list(range(rows))
    count = AUDIT_WORST if audit == "auto" else int(audit)
    order = np.argsort(-report.lhs, kind="stable")
    return sorted(int(k) for k in order[:count])


def poincare_from_pointwise(
    space: MetricMeasureSpace,
    u,
    nu,
    c0: float,
    sigma: float,
    audit: str | int = "auto",
    threads: int = 1,
) -> CharacterizationCertificate:
    """Certify ``int_B |u - u_B| dmu <= C r nu(3 sigma B)`` for every ball.

    Checks the pointwise hypothesis, computes the least Poincare constant
    with dilation ``3 sigma`` and attaches a proof trace for the audited
    balls (all of them for ``n <= 200``, else the 32 with the largest
    oscillation ``int_B |u - u_B|``).
    """
    if not space.length_metric:
        raise SpaceError("the construction needs a length-metric space; apply geometry.length_metric first")
    u = space.scalar_field(u)
    nu = space.point_measure(nu)
    pw = check_pointwise(space, u, nu, sigma, c0, threads)
    if not pw.passed:
        raise HypothesisError(
            f"pointwise hypothesis fails: c0 = {c0} < {pw.c0_minimal} at pair {pw.worst_pair}", pw
        )
    consts = proof_constants(space, c0, sigma)
    report = check_ball_poincare(space, u, nu, eta=consts.tau, normalized=False, threads=threads)
    rows = select_audit_rows(report, space.n, audit)

    def trace_for(k: int) -> ProofTrace:
        x0 = int(report.centers[k])
        B = ball(space, x0, trace_radius(space, x0, float(report.radii[k])))
        return build_proof_trace(space, u, nu, c0, sigma, B, consts)

    traces = tuple(pmap(trace_for, rows, threads))
    return CharacterizationCertificate(pw, report, consts, traces, tuple(rows))

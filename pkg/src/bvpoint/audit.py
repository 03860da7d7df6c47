"""Independent auditor for characterization certificates.

The auditor trusts nothing in a certificate except its inputs (space, ``u``,
``nu``, ``c0``, ``sigma``).  It recomputes every stored number with its own
brute-force routines, re-derives every flag from the stored trace values, and
reports each disagreement.  None of the library's cached sort orders or
profiles are used.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .space import SpaceError, space_from_document

RTOL = 1e-9
FLAG_RTOL = 1e-12
FLAGS = (
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
ALL_ROWS_MAX_N = 200
WORST_ROWS = 32


class MalformedCertificate(SpaceError):
    pass


@dataclass
class AuditResult:
    checked: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _leq(a: float, b: float) -> bool:
    return a <= b + FLAG_RTOL * abs(b)


def _pow2(k: int) -> float:
    return math.ldexp(1.0, k)


def _least_power(q: float, base: float) -> int:
    """Least ``k`` with ``q <= base * 2^k`` (``q, base > 0``)."""
    k = math.frexp(q)[1] - math.frexp(base)[1]
    while q > math.ldexp(base, k):
        k += 1
    while q <= math.ldexp(base, k - 1):
        k -= 1
    return k


class _Auditor:
    def __init__(self, doc: dict, scale: float, labels: tuple[str, ...]):
        self.doc = doc
        self.labels = labels
        self.result = AuditResult()
        self.scale = scale

    def same(self, path: str, stored: Any, expected: Any, atol: float = 0.0) -> None:
        self.result.checked += 1
        if not _agree(stored, expected, atol):
            self.result.mismatches.append(f"{path}: stored {stored!r}, recomputed {expected!r}")


def _agree(a, b, atol) -> bool:
    if isinstance(a, bool) or isinstance(b, bool) or a is None or b is None or isinstance(a, str):
        return a == b and type(a) is type(b)
    if isinstance(a, (list, tuple)) or isinstance(b, (list, tuple)):
        if not (isinstance(a, (list, tuple)) and isinstance(b, (list, tuple))) or len(a) != len(b):
            return False
        return all(_agree(x, y, atol) for x, y in zip(a, b))
    if isinstance(a, dict) or isinstance(b, dict):
        return isinstance(a, dict) and isinstance(b, dict) and a.keys() == b.keys() and all(
            _agree(a[k], b[k], atol) for k in a
        )
    if isinstance(b, (int, np.integer)) and not isinstance(b, bool):
        return isinstance(a, int) and a == int(b)
    a, b = float(a), float(b)
    if math.isinf(a) or math.isinf(b) or math.isnan(a) or math.isnan(b):
        return a == b
    return abs(a - b) <= RTOL * max(abs(a), abs(b)) + atol


def load_certificate(source: str | Path | dict) -> dict:
    if isinstance(source, dict):
        return source
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise MalformedCertificate(f"cannot read certificate: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedCertificate(f"certificate is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedCertificate("certificate must be a JSON object")
    return doc


def audit_certificate(source: str | Path | dict) -> AuditResult:
    """Recompute a certificate and compare; raises MalformedCertificate on bad input."""
    doc = load_certificate(source)
    try:
        return _audit(doc)
    except MalformedCertificate:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise MalformedCertificate(f"malformed certificate: {exc!r}") from exc


# independent recomputations


def _dilation_sup(d: np.ndarray, mass: np.ndarray, factor: float) -> float:
    best = 1.0
    for x in range(len(mass)):
        idx = np.argsort(d[x], kind="stable")
        ds, cm = d[x][idx], np.cumsum(mass[idx])
        b = np.unique(ds[ds > 0])
        if b.size == 0:
            continue
        inner = cm[np.searchsorted(ds, b, side="left") - 1]
        outer = cm[np.searchsorted(ds, factor * b, side="left") - 1]
        best = max(best, float((outer / inner).max()))
    return best


def _closed_ball_ratios(d_row: np.ndarray, num: np.ndarray, mass: np.ndarray):
    """Distinct distances ``t`` and ``num{d <= t} / mu{d <= t}`` from one center."""
    idx = np.argsort(d_row, kind="stable")
    ds = d_row[idx]
    t = np.unique(ds)
    cnt = np.searchsorted(ds, t, side="right")
    return t, np.cumsum(num[idx])[cnt - 1] / np.cumsum(mass[idx])[cnt - 1]


def _pointwise_terms(d, nu, mass, sigma):
    n = len(mass)
    terms = np.empty((n, n))
    for x in range(n):
        t, ratio = _closed_ball_ratios(d[x], nu, mass)
        running = np.maximum.accumulate(ratio)
        R = sigma * d[x]
        # radii r <= R realize the closed balls {d <= t} with t < R
        cnt = np.searchsorted(t, R, side="left")
        terms[x] = np.where(cnt > 0, running[np.maximum(cnt, 1) - 1], 0.0)
        terms[x, x] = running[-1]
    return terms


def _ratio(num: float, den: float) -> float:
    if num == 0:
        return 0.0
    if den == 0:
        return math.inf
    return num / den


def _ball_oscillation(u, mass, members, center) -> float:
    m = mass[members]
    ref = u[center]
    mean = ref + float(np.sum((u[members] - ref) * m)) / float(np.sum(m))
    return float(np.sum(np.abs(u[members] - mean) * m))


def _audit(doc: dict) -> AuditResult:
    if doc.get("kind") != "bvpoint.certificate":
        raise MalformedCertificate("not a certificate document")
    space = space_from_document(doc["space"])
    if not space.length_metric:
        raise MalformedCertificate("certificate space is not a length-metric space")
    n = space.n
    d = np.array(space.dist)
    mass = np.array(space.mass)
    u = np.asarray(doc["u"], dtype=float)
    nu = np.asarray(doc["nu"], dtype=float)
    if u.shape != (n,) or nu.shape != (n,) or np.any(nu < 0) or not np.all(np.isfinite(u)):
        raise MalformedCertificate("u and nu must be finite arrays of the space's size, nu >= 0")
    c0, sigma = float(doc["c0"]), float(doc["sigma"])
    if not (c0 > 0 and sigma >= 1):
        raise MalformedCertificate("c0 must be positive and sigma >= 1")
    scale = float(np.sum(np.abs(u - u[0]) * mass)) + 1e-300
    A = _Auditor(doc, scale, space.labels)

    consts = _constants(A, space, d, mass, c0, sigma)
    pw_passed = _audit_pointwise(A, space, d, mass, u, nu, c0, sigma)
    rows = _audit_poincare(A, d, mass, u, nu, consts["tau"])
    traces_passed = _audit_traces(A, space, d, mass, u, nu, consts, rows)

    minimal = doc["poincare"]["minimal_constant"]
    A.same("overall_constant", doc["overall_constant"], float(minimal))
    holds = all(_leq(lhs, minimal * rhs) for _, _, _, lhs, rhs, _ in rows) if math.isfinite(minimal) else True
    A.same("passed", doc["passed"], bool(pw_passed and math.isfinite(minimal) and holds and traces_passed))
    return A.result


def _constants(A, space, d, mass, c0, sigma) -> dict:
    cw = _dilation_sup(d, mass, 5.0)
    cd = _dilation_sup(d, mass, 2.0)
    dim = math.log2(cd)
    s = max(dim, 2.0)
    tau = 3.0 * sigma
    k0c = 2.0 * cw * cd ** math.ceil(math.log2(tau))
    iteration = 4.0 * c0 * (2.0 * cw) ** (1 / s) / (1 - 2 ** -(1 - 1 / s))
    tail = 2.0 * iteration * cw ** (1 - 1 / s) * 2 ** (-1 / s) / (1 - 2 ** (-1 / s))
    base = 4.0 * c0 * k0c
    expected = {
        "c0": c0,
        "sigma": sigma,
        "tau": tau,
        "weak_type": cw,
        "doubling": cd,
        "dimension": dim,
        "s": s,
        "k0_constant": k0c,
        "base_constant": base,
        "iteration_constant": iteration,
        "tail_constant": tail,
        "final_constant": 2.0 * (base + tail),
    }
    stored = A.doc["constants"]
    if set(stored) != set(expected):
        raise MalformedCertificate("constants block has unexpected keys")
    for key, value in expected.items():
        A.same(f"constants.{key}", stored[key], value)
    return expected


def _audit_pointwise(A, space, d, mass, u, nu, c0, sigma) -> bool:
    pw = A.doc["pointwise"]
    n = space.n
    if n < 2:
        c0_min, worst = 0.0, None
    else:
        terms = _pointwise_terms(d, nu, mass, sigma)
        c0_min, worst = -1.0, None
        for x in range(n - 1):
            ys = np.arange(x + 1, n)
            num = np.abs(u[x] - u[ys])
            den = d[x, ys] * (terms[x, ys] + terms[ys, x])
            q = [_ratio(a, b) for a, b in zip(num.tolist(), den.tolist())]
            j = int(np.argmax(q))
            if q[j] > c0_min:
                c0_min, worst = q[j], (x, int(ys[j]))
    passed = bool(c0_min <= c0)
    A.same("pointwise.sigma", pw["sigma"], sigma)
    A.same("pointwise.c0", pw["c0"], c0)
    A.same("pointwise.c0_minimal", pw["c0_minimal"], c0_min, atol=1e-12 * max(c0_min, 1.0) if math.isfinite(c0_min) else 0)
    if worst is not None and pw["worst_pair"] is not None:
        stored = [p["index"] for p in pw["worst_pair"]]
        # ties are broken by the first pair in row-major order; only flag
        # genuinely different ratios
        if stored != list(worst):
            i, j = stored
            q = _ratio(abs(u[i] - u[j]), d[i, j] * (terms[i, j] + terms[j, i]))
            A.same(f"pointwise.worst_pair {stored} ratio", q, c0_min)
        for p in pw["worst_pair"]:
            A.same("pointwise.worst_pair.label", p["label"], space.labels[p["index"]])
    elif worst is None:
        A.same("pointwise.worst_pair", pw["worst_pair"], None)
    else:
        A.result.mismatches.append(f"pointwise.worst_pair: missing, recomputed {list(worst)}")
    A.same("pointwise.passed", pw["passed"], passed)
    return passed


def _audit_poincare(A, d, mass, u, nu, eta) -> list[tuple]:
    pc = A.doc["poincare"]
    A.same("poincare.eta", pc["eta"], eta)
    A.same("poincare.normalized", pc["normalized"], False)
    expected = []
    for x in range(len(mass)):
        for a in np.unique(d[x][d[x] > 0]):
            members = np.flatnonzero(d[x] <= a)
            lhs = _ball_oscillation(u, mass, members, x)
            rhs = float(a) * float(np.sum(nu[d[x] <= eta * a]))
            expected.append((x, float(a), len(members), lhs, rhs, _ratio(lhs, rhs)))
    stored = pc["per_ball"]
    if pc.get("columns") != ["center", "radius", "size", "lhs", "rhs", "constant"]:
        raise MalformedCertificate("poincare rows have unexpected columns")
    A.same("poincare.balls", pc["balls"], len(expected))
    if len(stored) != len(expected):
        A.same("poincare.per_ball length", len(stored), len(expected))
        return [tuple(r) for r in stored]
    atol = 1e-12 * A.scale
    for k, (row, exp) in enumerate(zip(stored, expected)):
        A.same(f"poincare.per_ball[{k}]", list(row[:5]), list(exp[:5]), atol=atol)
        # the constant is re-derived from the stored pair so tiny lhs noise
        # does not amplify
        A.same(f"poincare.per_ball[{k}].constant", row[5], _ratio(row[3], row[4]))
    constants = [row[5] for row in stored]
    minimal = max(constants) if constants else 0.0
    A.same("poincare.minimal_constant", pc["minimal_constant"], minimal)
    worst = pc["worst_ball"]
    if constants:
        # first row tied with the maximum up to relative 1e-12
        k = next(i for i, c in enumerate(constants) if c == minimal or (
            math.isfinite(minimal) and c >= minimal - 1e-12 * abs(minimal)))
        c, r, z, lhs, rhs, const = stored[k]
        exp = {"center": c, "radius": r, "size": z, "lhs": lhs, "rhs": rhs, "constant": const, "label": A.labels[c]}
        A.same("poincare.worst_ball", worst, exp)
    else:
        A.same("poincare.worst_ball", worst, None)
    return [tuple(r) for r in stored]


def _selected_rows(rows: list[tuple], n: int, mode) -> list[int]:
    if mode == "all" or (mode == "auto" and n <= ALL_ROWS_MAX_N):
        return list(range(len(rows)))
    count = WORST_ROWS if mode == "auto" else int(mode)
    lhs = np.array([r[3] for r in rows])
    return sorted(int(k) for k in np.argsort(-lhs, kind="stable")[:count])


def _next_radius(d_row: np.ndarray, a: float) -> float:
    above = d_row[d_row > a]
    nxt = float(above.min()) if above.size else 2.0 * a
    return 0.5 * (a + nxt)


def _audit_traces(A, space, d, mass, u, nu, consts, rows) -> bool:
    traces = A.doc["traces"]
    mode = A.doc.get("audit", "auto")
    if mode not in ("auto", "all") and not (isinstance(mode, int) and mode >= 0):
        raise MalformedCertificate(f"bad audit selection {mode!r}")
    wanted = _selected_rows(rows, space.n, mode)
    A.same("traces.rows", [t["row"] for t in traces], wanted)
    ok = True
    for i, t in enumerate(traces):
        ok &= _audit_trace(A, f"traces[{i}]", space, d, mass, u, nu, consts, rows, t)
    return ok


def _audit_trace(A, path, space, d, mass, u, nu, consts, rows, t) -> bool:
    row = t["row"]
    if row is not None:
        x0, a = int(rows[row][0]), float(rows[row][1])
        A.same(f"{path}.center", t["center"], x0)
        A.same(f"{path}.radius", t["radius"], _next_radius(d[x0], a))
    x0, R = int(t["center"]), float(t["radius"])
    if not (0 <= x0 < space.n and R > 0):
        raise MalformedCertificate(f"{path}: bad ball")
    members = np.flatnonzero(d[x0] < R)
    A.same(f"{path}.members", t["members"], [int(m) for m in members])
    tau = consts["tau"]
    A.same(f"{path}.tau", t["tau"], tau)
    in_tau = d[x0] < tau * R
    lam = np.where(in_tau, nu, 0.0)
    lam_total = float(np.sum(lam))
    mu_b = float(np.sum(mass[members]))
    A.same(f"{path}.lambda_total", t["lambda_total"], lam_total)
    A.same(f"{path}.mu_ball", t["mu_ball"], mu_b)
    A.same(f"{path}.mu_tau_ball", t["mu_tau_ball"], float(np.sum(mass[in_tau])))
    A.same(f"{path}.final_lhs", t["final_lhs"], _ball_oscillation(u, mass, members, x0), atol=1e-12 * A.scale)

    if lam_total == 0:
        for key, value in (("maximal", []), ("level_of", []), ("k0", None), ("shift_point", None),
                           ("shift", 0.0), ("levels", []), ("k0_bounds", None), ("a_k0_bound", 0.0),
                           ("level_sum", 0.0), ("final_rhs", 0.0)):
            A.same(f"{path}.{key}", t[key], value)
        flags = {name: True for name in FLAGS}
        if np.any(u[members] != u[members[0]]):
            A.result.mismatches.append(f"{path}: nu vanishes on tau B but u is not constant on B")
    else:
        _recompute_levels(A, path, d, mass, u, consts, t, x0, R, members, lam, lam_total, mu_b)
        flags = _flags_from_stored(t, consts)
        flags["lipschitz"] = _lipschitz(d, u, consts["c0"], t)
    A.same(f"{path}.verified", t["verified"], flags)
    passed = all(flags.values())
    A.same(f"{path}.passed", t["passed"], passed)
    return passed


def _recompute_levels(A, path, d, mass, u, consts, t, x0, R, members, lam, lam_total, mu_b):
    m_lam = []
    for x in members:
        _, ratio = _closed_ball_ratios(d[x], lam, mass)
        m_lam.append(float(ratio.max()))
    A.same(f"{path}.maximal", t["maximal"], m_lam)
    lvl = np.array([_least_power(m, 1.0) for m in m_lam])
    A.same(f"{path}.level_of", t["level_of"], [int(k) for k in lvl])
    cw = consts["weak_type"]
    k0 = _least_power(cw * lam_total, mu_b)
    A.same(f"{path}.k0", t["k0"], k0)
    e0 = np.flatnonzero(lvl <= k0)
    if e0.size:
        p = int(members[e0[np.argmin(np.abs(u[members[e0]]))]])
        shift_point, shift = p, float(u[p])
    else:
        shift_point, shift = None, 0.0
    A.same(f"{path}.shift_point", t["shift_point"], shift_point)
    A.same(f"{path}.shift", t["shift"], shift)
    v = np.abs(u[members] - shift)
    s = consts["s"]
    levels = []
    prev_mass, level_sum = 0.0, 0.0
    for k in range(min(int(lvl.min()), k0), max(int(lvl.max()), k0) + 1):
        e = lvl <= k
        below = lvl <= k - 1
        if not e.any():
            reach = 0.0
        elif not below.any():
            reach = math.inf
        else:
            reach = float(d[np.ix_(members[e], members[below])].min(axis=1).max())
        a_k = float(v[e].max()) if e.any() else 0.0
        mass_k = float(np.sum(mass[members[e]]))
        levels.append({
            "k": k,
            "count": int(e.sum()),
            "mass": mass_k,
            "a": a_k,
            "r": 2 * R * (cw * lam_total / (_pow2(k - 1) * mu_b)) ** (1 / s),
            "reach": reach,
        })
        level_sum += a_k * (mass_k - prev_mass)
        prev_mass = mass_k
    stored = t["levels"]
    A.same(f"{path}.levels.window", [lv["k"] for lv in stored], [lv["k"] for lv in levels])
    for lv_s, lv_e in zip(stored, levels):
        for key in ("count", "mass", "a", "r", "reach"):
            A.same(f"{path}.levels[k={lv_e['k']}].{key}", lv_s[key], lv_e[key], atol=1e-15)
    mu_tau = float(t["mu_tau_ball"])
    k0c = consts["k0_constant"]
    A.same(f"{path}.k0_bounds", t["k0_bounds"], [lam_total / (k0c * mu_tau), k0c * lam_total / mu_tau])
    A.same(f"{path}.a_k0_bound", t["a_k0_bound"], consts["base_constant"] * R * lam_total / mu_tau)
    A.same(f"{path}.level_sum", t["level_sum"], level_sum, atol=1e-12 * A.scale)
    A.same(f"{path}.final_rhs", t["final_rhs"], consts["final_constant"] * R * lam_total)


def _lipschitz(d, u, c0, t) -> bool:
    members = np.asarray(t["members"], dtype=int)
    lvl = np.asarray(t["level_of"], dtype=int)
    for i in range(len(members)):
        bound = c0 * np.ldexp(1.0, np.maximum(lvl[i], lvl) + 1) * d[members[i], members]
        if np.any(np.abs(u[members[i]] - u[members]) > bound + FLAG_RTOL * bound):
            return False
    return True


def _flags_from_stored(t: dict, consts: dict) -> dict[str, bool]:
    lv = t["levels"]
    R, lam, mu_b, k0 = t["radius"], t["lambda_total"], t["mu_ball"], t["k0"]
    cw, c0, s = consts["weak_type"], consts["c0"], consts["s"]
    by_k = {level["k"]: level for level in lv}
    if k0 not in by_k or not lv:
        raise MalformedCertificate("trace window does not contain k0")
    flags: dict[str, bool] = {}
    flags["nested"] = lv[-1]["count"] == len(t["members"]) and all(
        p["count"] <= q["count"] and p["mass"] <= q["mass"] and p["a"] <= q["a"] for p, q in zip(lv, lv[1:])
    )
    flags["radii_decreasing"] = all(q["r"] < p["r"] for p, q in zip(lv, lv[1:]))
    outside = [mu_b - (lv[i - 1]["mass"] if i else 0.0) for i in range(len(lv))]
    flags["weak_type"] = all(_leq(o, cw * lam / _pow2(level["k"] - 1)) for o, level in zip(outside, lv))
    a0 = by_k[k0]["a"]
    connecting, iteration = by_k[k0]["count"] > 0, True
    growth = consts["iteration_constant"] * R * (lam / mu_b) ** (1 / s)
    for p, q in zip(lv, lv[1:]):
        if q["k"] <= k0:
            continue
        connecting = connecting and q["r"] <= 2 * R and q["reach"] < q["r"]
        iteration = iteration and _leq(q["a"], p["a"] + c0 * _pow2(q["k"] + 1) * q["r"])
        iteration = iteration and _leq(q["a"], a0 + growth * 2 ** (q["k"] * (1 - 1 / s)))
    flags["connecting"] = bool(connecting)
    flags["iteration"] = bool(iteration)
    lower, upper = t["k0_bounds"]
    flags["claim_k0"] = (
        _leq(cw * lam, math.ldexp(mu_b, k0))
        and cw * lam > math.ldexp(mu_b, k0 - 1)
        and _leq(lower, _pow2(k0))
        and _leq(_pow2(k0), upper)
    )
    flags["base"] = _leq(a0, c0 * _pow2(k0 + 1) * 2 * R) and _leq(a0, t["a_k0_bound"])
    flags["level_sum"] = _leq(t["final_lhs"], 2 * t["level_sum"]) and _leq(2 * t["level_sum"], t["final_rhs"])
    flags["final"] = _leq(t["final_lhs"], t["final_rhs"])
    return {name: flags.get(name, True) for name in FLAGS}

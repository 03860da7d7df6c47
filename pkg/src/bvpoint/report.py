"""Canonical JSON for reports and certificates.

Keys keep insertion order, floats are printed with 17 significant digits
(enough to round-trip a double), non-finite floats use the ``Infinity`` /
``NaN`` tokens that Python's json module reads back.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np

from .characterization import CharacterizationCertificate, PointwiseReport, ProofTrace
from .space import MetricMeasureSpace, space_to_document
from .variation import PoincareReport

CERTIFICATE_KIND = "bvpoint.certificate"
POINCARE_COLUMNS = ["center", "radius", "size", "lhs", "rhs", "constant"]


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _scalar(x: Any) -> str | None:
    if x is None:
        return "null"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format_float(float(x))
    if isinstance(x, str):
        import json

        return json.dumps(x, ensure_ascii=False)
    return None


def dumps(obj: Any, indent: int = 1) -> str:
    """Serialize ``obj``; lists of scalars stay on one line."""
    out: list[str] = []
    _emit(obj, 0, indent, out)
    out.append("\n")
    return "".join(out)


def _emit(obj, level, indent, out):
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    s = _scalar(obj)
    if s is not None:
        out.append(s)
        return
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + _scalar(str(k)) + ": ")
            _emit(v, level + 1, indent, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
        return
    if isinstance(obj, (list, tuple)):
        items = [x.tolist() if isinstance(x, np.ndarray) else x for x in obj]
        scalars = [_scalar(x) for x in items]
        if all(s is not None for s in scalars):
            out.append("[" + ", ".join(scalars) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(items):
            out.append(pad)
            _emit(v, level + 1, indent, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "]")
        return
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def point_ref(space: MetricMeasureSpace, i: int) -> dict:
    return {"index": int(i), "label": space.labels[i]}


def pointwise_to_dict(space: MetricMeasureSpace, report: PointwiseReport) -> dict:
    d = {
        "sigma": report.sigma,
        "c0": report.c0,
        "c0_minimal": report.c0_minimal,
        "worst_pair": None if report.worst_pair is None else [point_ref(space, i) for i in report.worst_pair],
        "passed": report.passed,
    }
    if report.p is not None:
        d["p"] = report.p
    return d


def poincare_to_dict(space: MetricMeasureSpace, report: PoincareReport, rows: bool = True) -> dict:
    worst = report.worst_ball
    d = {
        "eta": report.eta,
        "normalized": report.normalized,
        "minimal_constant": report.minimal_constant,
        "worst_ball": None if worst is None else dict(worst, label=space.labels[worst["center"]]),
        "balls": len(report.constants),
    }
    if rows:
        d["columns"] = POINCARE_COLUMNS
        d["per_ball"] = [
            [int(c), float(r), int(z), float(a), float(b), float(k)]
            for c, r, z, a, b, k in zip(
                report.centers, report.radii, report.sizes, report.lhs, report.rhs, report.constants
            )
        ]
    return d


def trace_to_dict(trace: ProofTrace, row: int | None = None) -> dict:
    return {
        "row": row,
        "center": trace.center,
        "radius": trace.radius,
        "members": list(trace.members),
        "tau": trace.tau,
        "lambda_total": trace.lambda_total,
        "mu_ball": trace.mu_ball,
        "mu_tau_ball": trace.mu_tau_ball,
        "maximal": list(trace.maximal),
        "level_of": list(trace.level_of),
        "k0": trace.k0,
        "shift_point": trace.shift_point,
        "shift": trace.shift,
        "levels": [
            {"k": lv.k, "count": lv.count, "mass": lv.mass, "a": lv.a, "r": lv.r, "reach": lv.reach}
            for lv in trace.levels
        ],
        "k0_bounds": None if trace.k0_bounds is None else list(trace.k0_bounds),
        "a_k0_bound": trace.a_k0_bound,
        "level_sum": trace.level_sum,
        "final_lhs": trace.final_lhs,
        "final_rhs": trace.final_rhs,
        "verified": dict(trace.verified),
        "passed": trace.passed,
    }


def certificate_to_document(
    space: MetricMeasureSpace, u, nu, cert: CharacterizationCertificate, audit: str | int = "auto"
) -> dict:
    """Everything an auditor needs to recompute the certificate from scratch."""
    doc = space_to_document(space)
    doc.pop("functions", None)
    doc.pop("measures", None)
    return {
        "kind": CERTIFICATE_KIND,
        "version": 1,
        "space": doc,
        "u": [float(v) for v in space.scalar_field(u)],
        "nu": [float(v) for v in space.point_measure(nu)],
        "c0": cert.constants.c0,
        "sigma": cert.constants.sigma,
        "constants": cert.constants.as_dict(),
        "pointwise": pointwise_to_dict(space, cert.pointwise),
        "poincare": poincare_to_dict(space, cert.poincare),
        "audit": audit,
        "traces": [trace_to_dict(t, row) for t, row in zip(cert.traces, cert.trace_rows)],
        "overall_constant": cert.overall_constant,
        "passed": cert.passed,
    }

"""``bvpoint`` command line: run one operator on a space document, emit JSON.

Exit codes: 0 computed (and any checked inequality holds), 2 computed and an
inequality fails (the report carries the witness), 1 input or precondition
error (diagnostic on stderr).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .audit import MalformedCertificate, audit_certificate
from .characterization import (
    HypothesisError,
    check_pointwise,
    check_sobolev_pointwise,
    poincare_from_pointwise,
)
from .geometry import (
    check_geodesic_lemma,
    doubling_dimension,
    dilation_constant,
    geometry_report,
    small_ball_check,
)
from .maximal import maximal_function, maximal_function_measure
from .report import certificate_to_document, dumps, point_ref, poincare_to_dict, pointwise_to_dict
from .space import MetricMeasureSpace, SpaceError, load_space
from .variation import check_ball_poincare, total_variation, upper_gradient_check, variation_measure

OK, VIOLATED, INPUT_ERROR = 0, 2, 1


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _audit_mode(text: str) -> str | int:
    if text in ("auto", "all"):
        return text
    try:
        k = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("audit must be 'auto', 'all' or a ball count") from None
    if k < 0:
        raise argparse.ArgumentTypeError("audit ball count must be >= 0")
    return k


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bvpoint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def command(name: str, help: str, source: str = "space document") -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("input", help=source)
        p.add_argument("--output", "-o", help="write the report here instead of stdout")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        return p

    command("info", "summarize a space document")

    p = command("maximal", "restricted maximal function of a function or measure")
    p.add_argument("--function")
    p.add_argument("--measure")
    p.add_argument("--R", type=_float, default=math.inf, help="maximal radius (default: unrestricted)")

    p = command("doubling", "doubling constant and dimension")
    p.add_argument("--audit", action="store_true", help="also sweep the dimension bound")

    p = command("geometry", "doubling, quasiconvexity and the geodesic ball lemma")
    p.add_argument("--x0")
    p.add_argument("--R", type=_float)
    p.add_argument("--x")
    p.add_argument("--r", type=_float)
    p.add_argument("--delta", type=_float, help="slack (default: longest edge)")

    p = command("variation", "discrete variation measure; optional upper-gradient check")
    p.add_argument("--function", required=True)
    p.add_argument("--mode", choices=("graph", "grid"), default="graph")
    p.add_argument("--gradient", help="function to test as an upper gradient")
    p.add_argument("--path-budget", type=int, default=64)

    p = command("poincare", "least constants of the ball-wise Poincare inequality")
    p.add_argument("--function", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--eta", type=_float, default=1.0)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--c0", type=_float, help="check this constant instead of only reporting the least one")

    p = command("pointwise", "pointwise maximal-function inequality over all pairs")
    p.add_argument("--function", required=True)
    p.add_argument("--measure")
    p.add_argument("--gradient", help="use the Sobolev form with this function instead of a measure")
    p.add_argument("--p", type=_float, default=1.0)
    p.add_argument("--sigma", type=_float)
    p.add_argument("--c0", type=_float)

    p = command("characterize", "pointwise inequality to Poincare certificate")
    p.add_argument("--function", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--sigma", type=_float, default=1.0)
    p.add_argument("--c0", type=_float, required=True)
    p.add_argument("--audit", type=_audit_mode, default="auto", help="'auto', 'all' or a ball count")

    command("audit", "independently recompute a certificate", source="certificate document")
    return parser


def _point(space: MetricMeasureSpace, text: str) -> int:
    if text in space.labels:
        return space.labels.index(text)
    try:
        return space.index(int(text))
    except ValueError:
        raise SpaceError(f"unknown point {text!r}") from None


def _header(args, space: MetricMeasureSpace) -> dict:
    return {"command": args.command, "space": space.name, "n": space.n}


def cmd_info(args, space):
    rep = _header(args, space)
    rep.update(
        graph_backed=space.graph_backed,
        length_metric=space.length_metric,
        diameter=space.diameter,
        total_mass=float(np.cumsum(space.mass)[-1]),
        labels=list(space.labels),
        functions=sorted(space.functions),
        measures=sorted(space.measures),
        grid=None if space.grid is None else list(space.grid.shape),
    )
    return OK, rep


def cmd_maximal(args, space):
    if (args.function is None) == (args.measure is None):
        raise SpaceError("give exactly one of --function or --measure")
    if not args.R > 0:
        raise SpaceError(f"R must be positive, got {args.R}")
    if args.function is not None:
        values = maximal_function(space, space.scalar_field(args.function), args.R, args.threads)
        kind, name = "function", args.function
    else:
        values = maximal_function_measure(space, space.point_measure(args.measure), args.R, args.threads)
        kind, name = "measure", args.measure
    k = int(np.argmax(values))
    rep = _header(args, space)
    rep.update(operand=kind, name=name, R=args.R, values=values, max=dict(point_ref(space, k), value=values[k]))
    return OK, rep


def cmd_doubling(args, space):
    w = dilation_constant(space, 2.0)
    rep = _header(args, space)
    rep.update(
        doubling_constant=w.value,
        doubling_dimension=math.log2(w.value),
        witness=dict(point_ref(space, w.center), radius=w.radius),
    )
    if args.audit:
        a = doubling_dimension(space, audit=True)
        wit = None
        if a.witness is not None:
            x, y, r, R = a.witness
            wit = {"x": point_ref(space, x), "y": point_ref(space, y), "r": r, "R": R}
        rep["dimension_audit"] = {"s": a.s, "best_constant": a.best_constant, "witness": wit}
    return OK, rep


def cmd_geometry(args, space):
    g = geometry_report(space)
    rep = _header(args, space)
    rep.update(
        doubling_constant=g.doubling_constant,
        doubling_dimension=g.doubling_dimension,
        quasiconvexity_constant=g.quasiconvexity_constant,
        witness=dict(point_ref(space, g.witness_center), radius=g.witness_radius),
    )
    lemma_args = (args.x0, args.R, args.x, args.r)
    if all(v is None for v in lemma_args):
        return OK, rep
    if any(v is None for v in lemma_args):
        raise SpaceError("the lemma check needs all of --x0, --R, --x, --r")
    x0, x = _point(space, args.x0), _point(space, args.x)
    res = check_geodesic_lemma(space, x0, args.R, x, args.r, args.delta)
    lemma = {
        "x0": point_ref(space, x0),
        "R": args.R,
        "x": point_ref(space, x),
        "r": args.r,
        "slack": res.slack,
        "success": res.success,
        "branch": res.branch,
        "intersection": [space.labels[i] for i in res.intersection],
        "witness": None,
        "message": res.message,
    }
    if res.witness is not None:
        w = res.witness
        sb = small_ball_check(space, x0, args.R, x, args.r, g.doubling_constant, g.doubling_dimension)
        lemma["witness"] = dict(
            point_ref(space, w.center), radius=w.radius, members=[space.labels[i] for i in w.members]
        )
        lemma["small_ball"] = {"lhs": sb.lhs, "rhs": sb.rhs, "holds": sb.holds}
    rep["lemma"] = lemma
    return (OK if res.success else VIOLATED), rep


def cmd_variation(args, space):
    u = space.scalar_field(args.function)
    nu = variation_measure(space, u, args.mode)
    rep = _header(args, space)
    rep.update(function=args.function, mode=args.mode, total=total_variation(space, u, args.mode), measure=nu)
    if args.gradient is None:
        return OK, rep
    res = upper_gradient_check(space, u, space.scalar_field(args.gradient), args.path_budget)
    wit = None
    if res.witness is not None:
        x, y, path, osc, integral = res.witness
        wit = {
            "x": point_ref(space, x),
            "y": point_ref(space, y),
            "path": [space.labels[i] for i in path],
            "oscillation": osc,
            "line_integral": integral,
        }
    rep["upper_gradient"] = {
        "gradient": args.gradient,
        "path_budget": args.path_budget,
        "paths_checked": res.paths_checked,
        "passed": res.passed,
        "witness": wit,
    }
    return (OK if res.passed else VIOLATED), rep


def cmd_poincare(args, space):
    rep_ = check_ball_poincare(
        space, space.scalar_field(args.function), space.point_measure(args.measure), args.eta, args.normalized, args.threads
    )
    rep = _header(args, space)
    rep.update(function=args.function, measure=args.measure)
    rep.update(poincare_to_dict(space, rep_))
    if args.c0 is not None:
        passed = rep_.holds(args.c0)
        rep.update(c0=args.c0, passed=passed)
    else:
        passed = math.isfinite(rep_.minimal_constant)
        rep["passed"] = passed
    return (OK if passed else VIOLATED), rep


def cmd_pointwise(args, space):
    u = space.scalar_field(args.function)
    if (args.measure is None) == (args.gradient is None):
        raise SpaceError("give exactly one of --measure or --gradient")
    if args.measure is not None:
        sigma = 1.0 if args.sigma is None else args.sigma
        res = check_pointwise(space, u, space.point_measure(args.measure), sigma, args.c0, args.threads)
        operand = {"measure": args.measure}
    else:
        sigma = 2.0 if args.sigma is None else args.sigma
        res = check_sobolev_pointwise(space, u, space.scalar_field(args.gradient), args.p, sigma, args.c0, args.threads)
        operand = {"gradient": args.gradient}
    rep = _header(args, space)
    rep.update(function=args.function, **operand)
    rep.update(pointwise_to_dict(space, res))
    return (OK if res.passed else VIOLATED), rep


def cmd_characterize(args, space):
    u = space.scalar_field(args.function)
    nu = space.point_measure(args.measure)
    try:
        cert = poincare_from_pointwise(space, u, nu, args.c0, args.sigma, args.audit, args.threads)
    except HypothesisError as exc:
        rep = _header(args, space)
        rep.update(function=args.function, measure=args.measure, error=str(exc), passed=False)
        if exc.report is not None:
            rep["pointwise"] = pointwise_to_dict(space, exc.report)
        return VIOLATED, rep
    doc = certificate_to_document(space, u, nu, cert, args.audit)
    return (OK if cert.passed else VIOLATED), doc


def cmd_audit(args):
    res = audit_certificate(args.input)
    rep = {"command": "audit", "certificate": str(args.input), "checked": res.checked, "agrees": res.ok}
    rep["mismatches"] = res.mismatches
    return (OK if res.ok else VIOLATED), rep


COMMANDS = {
    "info": cmd_info,
    "maximal": cmd_maximal,
    "doubling": cmd_doubling,
    "geometry": cmd_geometry,
    "variation": cmd_variation,
    "poincare": cmd_poincare,
    "pointwise": cmd_pointwise,
    "characterize": cmd_characterize,
}


def run(args: argparse.Namespace) -> tuple[int, dict]:
    if args.threads < 1:
        raise SpaceError("--threads must be >= 1")
    if args.command == "audit":
        return cmd_audit(args)
    return COMMANDS[args.command](args, load_space(Path(args.input)))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return INPUT_ERROR if exc.code else OK
    try:
        code, rep = run(args)
    except (SpaceError, MalformedCertificate, OSError) as exc:
        print(f"bvpoint {args.command}: {exc}", file=sys.stderr)
        return INPUT_ERROR
    text = dumps(rep)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())

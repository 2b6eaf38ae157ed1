import logging

import numpy as np

from pharmonic import artifacts
from pharmonic.cli.common import RunContext, load_field_spec, load_geometry, parse_floats
from pharmonic.core.exceptions import ExclusionError, InvalidParameterError, PharmonicError, VerificationError
from pharmonic.services import geometry, verify
from pharmonic.services.fields import build_field

logger = logging.getLogger(__name__)

DEFAULT_FIELD = '{"kind": "ball-interior", "n": 2, "a": [1.0, 0.0]}'
DEFAULT_GEOMETRY = '{"kind": "unit-disk"}'


def _sample_points(args, n: int, seed: int) -> np.ndarray:
    if args.points:
        points = np.atleast_2d(np.asarray(artifacts.read_json(args.points)["points"], dtype=float))
        if points.shape[1] != n:
            raise InvalidParameterError(f"points have dimension {points.shape[1]}, the field has {n}")
        return points
    center = parse_floats(args.center) if args.center else None
    if center is not None and len(center) != n:
        raise InvalidParameterError(f"center has dimension {len(center)}, the field has {n}")
    return verify.sample_ball(n, args.samples, seed, args.radius, center, args.min_radius)


def cmd_assemble(args, ctx: RunContext):
    u = build_field(load_field_spec(args.field))
    rows = []
    skipped = 0
    for x in _sample_points(args, u.n, ctx.run.seed):
        try:
            value, grad = u(x)
        except PharmonicError as exc:
            logger.debug(f"skipped {x.tolist()}: {exc.detail}")
            skipped += 1
            continue
        rows.append([*x, value, *grad])
    header = [f"x{i + 1}" for i in range(u.n)] + ["value"] + [f"grad{i + 1}" for i in range(u.n)]
    artifacts.write_csv(ctx.path("field.csv"), header, rows, ctx.run)
    ctx.emit({"field": u.description, "n": u.n, "n_points": len(rows), "n_skipped": skipped})
    return 0


def cmd_residual(args, ctx: RunContext):
    u = build_field(load_field_spec(args.field))
    p = args.p if args.p is not None else (u.p if u.p is not None else float(u.n))
    points = _sample_points(args, u.n, ctx.run.seed)
    reports, skipped = verify.residual_sweep(u, p, points, args.h)
    if not reports:
        raise VerificationError(f"no admissible sample for {u.description}")

    orders = []
    if args.orders:
        steps = [4.0 * reports[0].h, 2.0 * reports[0].h, reports[0].h]
        for report in reports:
            try:
                order = verify.convergence_order(u, p, report.point, steps)
            except ExclusionError as exc:
                logger.debug(f"order skipped: {exc.detail}")
                continue
            if order is not None:
                orders.append(order)

    rows = [[*r.point, r.residual, r.normalized, r.passed] for r in reports]
    header = [f"x{i + 1}" for i in range(u.n)] + ["residual", "normalized", "pass"]
    artifacts.write_csv(ctx.path("residual.csv"), header, rows, ctx.run)
    passed = all(r.passed for r in reports)
    summary = {
        "field": u.description,
        "p": p,
        "n_samples": len(reports),
        "n_skipped": skipped,
        "n_failed": sum(not r.passed for r in reports),
        "max_normalized": max(r.normalized for r in reports),
        "min_order": min(orders) if orders else None,
        "pass": passed,
    }
    ctx.emit(summary)
    logger.info(f"Residual sweep of {u.description}: {'pass' if passed else 'fail'}")
    if args.strict and not passed:
        raise VerificationError(f"{summary['n_failed']} samples above the residual threshold")
    return 0


def cmd_limits(args, ctx: RunContext):
    u = build_field(load_field_spec(args.field))
    g = load_geometry(args.geometry)
    a = np.asarray(parse_floats(args.a))
    if u.n != 2 or a.size != 2:
        raise InvalidParameterError("boundary limits are sampled in the plane")
    _, normal, sd = geometry.boundary_projection(g, a)
    if abs(sd) > 1e-9:
        raise InvalidParameterError(f"a={a.tolist()} is not a boundary point (sd={sd:.3e})")
    limit = verify.boundary_limit(u, a, normal, verify.direction_fan(normal, args.directions))
    blowup = verify.blowup_convergence(u, g, a, normal, parse_floats(args.radii))
    passed = limit.max_error <= args.threshold and blowup.errors[-1] < blowup.errors[0]
    ctx.emit({"boundary_limit": limit, "blowup": blowup, "pass": passed})
    if args.strict and not passed:
        raise VerificationError(f"boundary limit error {limit.max_error:.3e}")
    return 0


def cmd_reflectcheck(args, ctx: RunContext):
    g = load_geometry(args.geometry)
    reports = [verify.reflection_check(g, p, args.samples, ctx.run.seed) for p in parse_floats(args.p)]
    passed = all(r.passed for r in reports)
    ctx.emit({"geometry": g, "reports": reports, "pass": passed})
    if args.strict and not passed:
        raise VerificationError("transformed coefficients fail the reflection checks")
    return 0


def _add_sampling(parser) -> None:
    parser.add_argument("--field", default=DEFAULT_FIELD, help="field descriptor JSON, or @file.json")
    parser.add_argument("--points", default=None, help='JSON file with {"points": [[...], ...]}')
    parser.add_argument("--samples", type=int, default=100)
    parser.add_argument("--radius", type=float, default=1.0)
    parser.add_argument("--center", default=None, help="comma separated coordinates")
    parser.add_argument("--min-radius", type=float, default=0.0)


def register(subparsers) -> None:
    assemble = subparsers.add_parser("assemble", help="evaluate a constructed field and its gradient")
    _add_sampling(assemble)
    assemble.set_defaults(handler=cmd_assemble)

    residual = subparsers.add_parser("residual", help="strong-form p-Laplace residual sweep")
    _add_sampling(residual)
    residual.add_argument("--p", type=float, default=None)
    residual.add_argument("--h", type=float, default=None)
    residual.add_argument("--orders", action="store_true", help="also fit the convergence order per sample")
    residual.add_argument("--strict", action="store_true", help="exit 4 when a sample fails")
    residual.set_defaults(handler=cmd_residual)

    limits = subparsers.add_parser("limits", help="boundary limit and blow-up of a singular field")
    limits.add_argument("--field", default=DEFAULT_FIELD)
    limits.add_argument("--geometry", default=DEFAULT_GEOMETRY)
    limits.add_argument("--a", default="1,0")
    limits.add_argument("--directions", type=int, default=32)
    limits.add_argument("--radii", default="0.1,0.05,0.025")
    limits.add_argument("--threshold", type=float, default=1e-3)
    limits.add_argument("--strict", action="store_true")
    limits.set_defaults(handler=cmd_limits)

    reflect = subparsers.add_parser("reflectcheck", help="transformed coefficients of the reflected equation")
    reflect.add_argument("--geometry", default=DEFAULT_GEOMETRY)
    reflect.add_argument("--p", default="1.5,2,3")
    reflect.add_argument("--samples", type=int, default=200)
    reflect.add_argument("--strict", action="store_true")
    reflect.set_defaults(handler=cmd_reflectcheck)

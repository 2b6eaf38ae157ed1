import logging
import math

import numpy as np

from pharmonic import artifacts
from pharmonic.cli.common import RunContext, parse_int_range, require
from pharmonic.core.exceptions import ExclusionError, VerificationError
from pharmonic.services import spectral, verify
from pharmonic.services.fields import cached_pair

logger = logging.getLogger(__name__)


def cmd_beta(args, ctx: RunContext):
    require(args, "p")
    rows = []
    for k in parse_int_range(args.k):
        closed = spectral.beta_closed_form(args.p, k)
        shooting = spectral.beta_by_shooting(args.p, k)
        rows.append({
            "k": k,
            "beta_closed": closed,
            "beta_shooting": shooting,
            "difference": abs(closed - shooting),
            "quadratic_residual": abs(spectral.quadratic_residual(args.p, k, closed)),
        })
        logger.info(f"p={args.p}, k={k}: beta {closed:.12g} (shooting {shooting:.12g})")
    header = ["k", "beta_closed", "beta_shooting", "difference", "quadratic_residual"]
    artifacts.write_csv(ctx.path("beta.csv"), header, ([row[h] for h in header] for row in rows), ctx.run)
    ctx.emit({"p": args.p, "rows": rows})
    return 0


def cmd_omega(args, ctx: RunContext):
    require(args, "p", "k")
    pair = spectral.tabulate(args.p, args.k, args.resolution)
    artifacts.write_profile(ctx.path("omega.csv"), pair, ctx.run)
    ctx.emit(spectral.spectral_summary(pair, seed=ctx.run.seed))
    return 0


def cmd_spherical(args, ctx: RunContext):
    require(args, "p", "k")
    pair = cached_pair(args.p, args.k)
    rng = np.random.default_rng(ctx.run.seed)
    # poles excluded: sin(phi) >= 0.1
    phis = rng.uniform(math.asin(0.1), math.pi - math.asin(0.1), args.samples)
    thetas = rng.uniform(0.0, 2.0 * math.pi, args.samples)
    rows = []
    for phi, theta in zip(phis, thetas):
        try:
            residual = verify.spherical_residual_3d(pair, pair.beta, float(phi), float(theta), args.h)
        except ExclusionError as exc:
            logger.debug(f"skipped: {exc.detail}")
            continue
        rows.append((phi, theta, residual))
    worst = max(abs(r[2]) for r in rows) if rows else 0.0
    passed = worst <= args.threshold
    artifacts.write_csv(ctx.path("spherical.csv"), ["phi", "theta", "residual"], rows, ctx.run)
    ctx.emit({"p": args.p, "k": args.k, "beta": pair.beta, "n_samples": len(rows), "max_residual": worst,
              "pass": passed})
    if args.strict and not passed:
        raise VerificationError(f"spherical residual {worst:.3e} above {args.threshold:.1e}")
    return 0


def register(subparsers) -> None:
    beta = subparsers.add_parser("beta", help="exponents beta_k by closed form and by shooting")
    beta.add_argument("--p", type=float, default=None)
    beta.add_argument("--k", default="1", help="mode, list or range such as 1..4")
    beta.set_defaults(handler=cmd_beta)

    omega = subparsers.add_parser("omega", help="tabulate the antiperiodic profile omega_k")
    omega.add_argument("--p", type=float, default=None)
    omega.add_argument("--k", type=int, default=None)
    omega.add_argument("--resolution", type=int, default=None)
    omega.set_defaults(handler=cmd_omega)

    spherical = subparsers.add_parser("spherical", help="residual of the 3D spherical reduction")
    spherical.add_argument("--p", type=float, default=None)
    spherical.add_argument("--k", type=int, default=None)
    spherical.add_argument("--samples", type=int, default=50)
    spherical.add_argument("--h", type=float, default=1e-3)
    spherical.add_argument("--threshold", type=float, default=1e-4)
    spherical.add_argument("--strict", action="store_true", help="exit 4 when the check fails")
    spherical.set_defaults(handler=cmd_spherical)

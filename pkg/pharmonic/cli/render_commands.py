import logging

from pharmonic import artifacts
from pharmonic.cli.common import RunContext, load_field_spec, load_geometry, parse_floats
from pharmonic.core.exceptions import InvalidParameterError
from pharmonic.services import render
from pharmonic.services.fields import build_field

logger = logging.getLogger(__name__)


def cmd_render(args, ctx: RunContext):
    meta = artifacts.meta_header(ctx.run)
    window = tuple(parse_floats(args.window)) if args.window else None
    if window is not None and len(window) != 4:
        raise InvalidParameterError("--window takes xmin,xmax,ymin,ymax")

    if args.solution:
        if not args.mesh:
            raise InvalidParameterError("--solution needs the --mesh it was computed on")
        mesh = artifacts.read_mesh(args.mesh)
        svg = render.render_solution(mesh, artifacts.read_solution(args.solution), meta, window, args.levels)
    else:
        if args.field is None:
            raise InvalidParameterError("give --field or --solution")
        u = build_field(load_field_spec(args.field))
        g = load_geometry(args.geometry) if args.geometry else None
        svg = render.render_field(u, window or (-1.0, 1.0, -1.0, 1.0), meta, args.resolution, g, args.levels)

    target = artifacts.write_text(ctx.path(args.output), svg)
    ctx.emit({"svg": target.name, "bytes": len(svg.encode("utf-8"))})
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("render", help="filled contour SVG of a planar field or discrete solution")
    parser.add_argument("--field", default=None, help="field descriptor JSON, or @file.json")
    parser.add_argument("--solution", default=None, help="solution CSV written by solve or fundamental")
    parser.add_argument("--mesh", default=None)
    parser.add_argument("--geometry", default=None, help="mask the field outside this domain")
    parser.add_argument("--window", default=None, help="xmin,xmax,ymin,ymax")
    parser.add_argument("--resolution", type=int, default=201)
    parser.add_argument("--levels", type=int, default=None)
    parser.add_argument("--output", default="render.svg")
    parser.set_defaults(handler=cmd_render)

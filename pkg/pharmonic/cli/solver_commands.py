import json
import logging
from typing import Callable, Dict

import numpy as np

from pharmonic import artifacts
from pharmonic.cli.common import RunContext, field_adapter, load_field_spec, load_geometry, parse_floats
from pharmonic.core.exceptions import InvalidParameterError, VerificationError
from pharmonic.schemas import Disk, PuncturedDisk, Sector, UnitDisk
from pharmonic.services import mesh as meshing
from pharmonic.services import solver
from pharmonic.services.fields import build_field

logger = logging.getLogger(__name__)


def mesh_for(g, h: float) -> meshing.Mesh2D:
    if isinstance(g, UnitDisk):
        if g.n != 2:
            raise InvalidParameterError("only planar domains are meshed")
        return meshing.mesh_disk(1.0, h=h)
    if isinstance(g, Disk):
        return meshing.mesh_disk(g.radius, h=h, center=tuple(g.center))
    if isinstance(g, PuncturedDisk):
        center = tuple(g.center) if g.center is not None else (0.0, 0.0)
        return meshing.mesh_disk(g.radius, g.a, g.epsilon, h, center=center)
    if isinstance(g, Sector):
        return meshing.mesh_sector(g.angle, g.radius, h)
    raise InvalidParameterError(f"cannot mesh a {g.kind}")


def _data_function(item) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(item, (int, float)):
        value = float(item)
        return lambda pts: np.full(len(pts), value)
    return build_field(field_adapter.validate_python(item)).value


def build_problem(args, mesh: meshing.Mesh2D) -> solver.DirichletProblem:
    given = [opt for opt in (args.boundary, args.tag_data, args.constant) if opt is not None]
    if len(given) != 1:
        raise InvalidParameterError("give exactly one of --boundary, --tag-data, --constant")
    if args.constant is not None:
        return solver.DirichletProblem.from_function(mesh, args.p, _data_function(args.constant))
    if args.boundary is not None:
        return solver.DirichletProblem.from_function(mesh, args.p, build_field(load_field_spec(args.boundary)).value)
    try:
        mapping = json.loads(args.tag_data)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"--tag-data is not valid JSON: {exc}") from exc
    unknown = set(mapping) - set(mesh.tags)
    if unknown:
        raise InvalidParameterError(f"unknown boundary tags {sorted(unknown)}; the mesh has {mesh.tags}")
    data: Dict[str, Callable] = {tag: _data_function(item) for tag, item in mapping.items()}
    return solver.DirichletProblem.from_tags(mesh, args.p, data)


def cmd_solve(args, ctx: RunContext):
    if args.mesh:
        mesh = artifacts.read_mesh(args.mesh)
    else:
        mesh = mesh_for(load_geometry(args.geometry), args.h)
    prob = build_problem(args, mesh)
    sol = solver.solve_dirichlet(prob, args.tol)

    summary = {
        "p": args.p,
        "n_vertices": len(mesh.vertices),
        "n_triangles": len(mesh.triangles),
        "energy": sol.energy,
        "initial_energy": sol.initial_energy,
        "iterations": sol.iterations,
        "stages": sol.stages,
        "residual_norm": sol.residual_norm,
        "gradient_fallbacks": sol.gradient_fallbacks,
    }
    if args.compare:
        exact = build_field(load_field_spec(args.compare))
        nodes = mesh.interior_nodes()
        reference = exact.value(mesh.vertices[nodes])
        error = np.abs(np.asarray(sol.values)[nodes] - reference)
        summary["sup_error"] = float(error.max())
        summary["relative_sup_error"] = float(error.max() / np.max(np.abs(reference)))
    artifacts.write_mesh(ctx.path("mesh.json"), mesh, ctx.run)
    artifacts.write_solution(ctx.path("solution.csv"), mesh, sol.values, ctx.run)
    artifacts.write_solver_log(ctx.path("solver_log.json"), sol.log, ctx.run)
    ctx.emit(summary)
    return 0


def cmd_fundamental(args, ctx: RunContext):
    g = load_geometry(args.geometry)
    result = solver.fundamental_solution(g, parse_floats(args.a), parse_floats(args.epsilons), args.h, tol=args.tol)
    for i, (epsilon, mesh, sol) in enumerate(zip(result.epsilons, result.meshes, result.solutions)):
        artifacts.write_mesh(ctx.path(f"mesh_eps{i}.json"), mesh, ctx.run)
        artifacts.write_solution(ctx.path(f"solution_eps{i}.csv"), mesh, sol.values, ctx.run)
        logger.info(f"epsilon={epsilon}: {len(mesh.vertices)} nodes, energy {sol.energy:.6g}")
    ctx.emit(result.report)
    if not result.report.passed:
        raise VerificationError("fundamental scheme failed its monotonicity or sandwich checks")
    return 0


def register(subparsers) -> None:
    solve = subparsers.add_parser("solve", help="P1 p-Laplace Dirichlet solve")
    solve.add_argument("--geometry", default='{"kind": "unit-disk"}')
    solve.add_argument("--mesh", default=None, help="mesh JSON written by an earlier run")
    solve.add_argument("--h", type=float, default=0.1)
    solve.add_argument("--p", type=float, default=2.0)
    solve.add_argument("--boundary", default=None, help="field descriptor giving data on every boundary node")
    solve.add_argument("--tag-data", default=None, help='JSON {"tag": descriptor-or-number}')
    solve.add_argument("--constant", type=float, default=None)
    solve.add_argument("--compare", default=None, help="field descriptor to measure the nodal error against")
    solve.add_argument("--tol", type=float, default=None)
    solve.set_defaults(handler=cmd_solve)

    fundamental = subparsers.add_parser("fundamental", help="singular solution at a boundary point by exhaustion")
    fundamental.add_argument("--geometry", default='{"kind": "unit-disk"}')
    fundamental.add_argument("--a", default="1,0")
    fundamental.add_argument("--epsilons", default="0.4,0.2,0.1,0.05")
    fundamental.add_argument("--h", type=float, default=0.02)
    fundamental.add_argument("--tol", type=float, default=None)
    fundamental.set_defaults(handler=cmd_fundamental)

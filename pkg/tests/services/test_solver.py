import math

import numpy as np
import pytest

from pharmonic.core.exceptions import InvalidParameterError, SolverError
from pharmonic.schemas import Disk, UnitDisk
from pharmonic.services import fields, solver
from pharmonic.services import mesh as meshing


def affine(pts):
    return 0.5 + pts[:, 0] + 2.0 * pts[:, 1]


def zeros(pts):
    return np.zeros(len(pts))


def test_affine_data_reproduced(coarse_disk_mesh):
    prob = solver.DirichletProblem.from_function(coarse_disk_mesh, 2.0, affine)
    sol = solver.solve_dirichlet(prob)
    np.testing.assert_allclose(sol.values, affine(coarse_disk_mesh.vertices), atol=1e-10)


@pytest.mark.parametrize("p", [1.5, 3.0, 4.0])
def test_affine_data_needs_no_newton(coarse_disk_mesh, p):
    sol = solver.solve_dirichlet(solver.DirichletProblem.from_function(coarse_disk_mesh, p, affine))
    np.testing.assert_allclose(sol.values, affine(coarse_disk_mesh.vertices), atol=1e-10)
    assert sol.iterations == 0
    assert sol.stages == 1


def test_constant_data(coarse_disk_mesh):
    prob = solver.DirichletProblem.from_function(coarse_disk_mesh, 3.0, lambda pts: np.full(len(pts), 2.5))
    sol = solver.solve_dirichlet(prob)
    np.testing.assert_allclose(sol.values, 2.5, atol=1e-12)
    assert sol.energy == pytest.approx(0.0, abs=1e-20)


def test_energy_decreases(coarse_disk_mesh):
    data = fields.separable_2d(fields.cached_pair(3.0, 2)).value
    sol = solver.solve_dirichlet(solver.DirichletProblem.from_function(coarse_disk_mesh, 3.0, data))
    assert sol.residual_norm <= 1e-10
    assert sol.energy <= sol.initial_energy
    assert sol.iterations > 0
    final = [entry.energy for entry in sol.log if entry.delta == 0.0]
    assert all(later <= earlier + 1e-15 * abs(earlier) for earlier, later in zip(final, final[1:]))


def test_unconverged_solve_raises(coarse_disk_mesh):
    data = fields.separable_2d(fields.cached_pair(3.0, 2)).value
    prob = solver.DirichletProblem.from_function(coarse_disk_mesh, 3.0, data)
    with pytest.raises(SolverError):
        solver.solve_dirichlet(prob, schedule=[0.0], max_newton=1)


def test_comparison_principle(coarse_disk_mesh):
    excess = solver.comparison_check(coarse_disk_mesh, 3.0, zeros, lambda pts: 1.0 + pts[:, 0])
    assert excess <= 1e-8


def test_interpolate(coarse_disk_mesh):
    sol = solver.solve_dirichlet(solver.DirichletProblem.from_function(coarse_disk_mesh, 2.0, affine))
    value, grad = solver.interpolate(sol, coarse_disk_mesh, [0.21, -0.33])
    assert value == pytest.approx(0.5 + 0.21 - 0.66, abs=1e-10)
    np.testing.assert_allclose(grad, [1.0, 2.0], atol=1e-9)
    node = int(coarse_disk_mesh.interior_nodes()[3])
    assert solver.interpolate(sol, coarse_disk_mesh, coarse_disk_mesh.vertices[node])[0] == pytest.approx(sol.values[node])


def test_problem_validation(coarse_disk_mesh):
    nodes = coarse_disk_mesh.boundary_nodes()
    with pytest.raises(InvalidParameterError):
        solver.DirichletProblem(coarse_disk_mesh, 1.0, nodes, np.zeros(len(nodes)))
    with pytest.raises(InvalidParameterError):
        solver.DirichletProblem(coarse_disk_mesh, 2.0, nodes[1:], np.zeros(len(nodes) - 1))
    with pytest.raises(InvalidParameterError):
        solver.DirichletProblem(coarse_disk_mesh, 2.0, np.append(nodes, nodes[0]), np.zeros(len(nodes) + 1))
    values = np.zeros(len(nodes))
    values[0] = np.nan
    with pytest.raises(InvalidParameterError):
        solver.DirichletProblem(coarse_disk_mesh, 2.0, nodes, values)


def test_tag_data_first_tag_wins():
    mesh = meshing.mesh_disk(1.0, a=(1.0, 0.0), epsilon=0.3, h=0.1)
    prob = solver.DirichletProblem.from_tags(mesh, 2.0, {"inner-arc": lambda pts: np.ones(len(pts)), "outer": zeros})
    corners = np.intersect1d(mesh.boundary_nodes("inner-arc"), mesh.boundary_nodes("outer"))
    values = dict(zip(prob.boundary_nodes.tolist(), prob.boundary_values.tolist()))
    assert [values[int(c)] for c in corners] == [1.0, 1.0]


def test_empty_schedule(coarse_disk_mesh):
    with pytest.raises(InvalidParameterError):
        solver.solve_dirichlet(solver.DirichletProblem.from_function(coarse_disk_mesh, 2.0, affine), schedule=[])


def sector_error(h):
    mesh = meshing.mesh_sector(0.5 * math.pi, 1.0, h)
    exact = fields.separable_2d(fields.cached_pair(4.0, 2))
    prob = solver.DirichletProblem.from_tags(mesh, 4.0, {"arc": exact.value, "ray-start": zeros, "ray-end": zeros})
    sol = solver.solve_dirichlet(prob)
    nodes = mesh.interior_nodes()
    reference = exact.value(mesh.vertices[nodes])
    return float(np.max(np.abs(np.asarray(sol.values)[nodes] - reference)) / np.max(np.abs(reference)))


@pytest.mark.slow
def test_manufactured_sector_convergence():
    coarse = sector_error(0.05)
    fine = sector_error(0.025)
    assert coarse <= 0.02
    assert coarse / fine >= 1.5


def test_fundamental_rejects_bad_input(unit_disk):
    with pytest.raises(InvalidParameterError):
        solver.fundamental_solution(unit_disk, [0.5, 0.0])
    with pytest.raises(InvalidParameterError):
        solver.fundamental_solution(unit_disk, [1.0, 0.0], p=3.0)
    with pytest.raises(InvalidParameterError):
        solver.fundamental_solution(unit_disk, [1.0, 0.0], epsilons=(0.1, 0.2))
    with pytest.raises(InvalidParameterError):
        solver.fundamental_solution(UnitDisk(n=3), [1.0, 0.0, 0.0])


def test_fundamental_single_epsilon(unit_disk):
    result = solver.fundamental_solution(unit_disk, [1.0, 0.0], epsilons=(0.3,), h=0.1)
    assert result.report.monotonicity == []
    assert result.report.sandwich_violations == 0
    assert result.report.sandwich_checked > 0


def test_fundamental_coarse_schedule():
    g = Disk(center=[0.0, 0.0], radius=2.0)
    a = [0.0, 2.0]
    result = solver.fundamental_solution(g, a, epsilons=(0.4, 0.2), h=0.1)
    assert len(result.report.monotonicity) == 1
    assert result.report.monotonicity[0].passed
    assert result.report.sandwich_violations == 0
    # the exact punctured solution is only known on the unit disk
    assert result.report.comparison_error is None
    mesh, sol = result.finest
    assert len(sol.values) == len(mesh.vertices)


@pytest.mark.slow
def test_fundamental_solution_matches_kernel(unit_disk):
    a = np.array([1.0, 0.0])
    result = solver.fundamental_solution(unit_disk, a)
    report = result.report
    assert report.passed
    assert all(row.passed and row.n_points > 0 for row in report.monotonicity)
    assert report.sandwich_violations == 0
    assert report.comparison_error <= 1e-2
    assert report.extrapolated_error <= 1e-2

    kernel = fields.ball_interior_field(2, a)
    x = np.array([-0.2, 0.3])
    assert result.extrapolate(x) == pytest.approx(kernel.value(x), rel=1e-2)
    assert result.extrapolated_field().value(x) == pytest.approx(result.extrapolate(x))

import logging
import math
import warnings
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from pharmonic.core.config import settings
from pharmonic.core.exceptions import InvalidParameterError, LineSearchError, SolverError
from pharmonic.schemas import (
    ArrayModel,
    Disk,
    MonotonicityRow,
    SchemeReport,
    SolverLogEntry,
    UnitDisk,
    Vector,
)
from pharmonic.services import fields
from pharmonic.services.fields import ScalarField
from pharmonic.services.mesh import Mesh2D, mesh_disk

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MIN_STEP = 1e-12
Q_FLOOR = 1e-30

BoundaryData = Callable[[np.ndarray], np.ndarray]


class DirichletProblem:
    """P1 p-Laplace Dirichlet problem: one prescribed value per boundary node."""

    def __init__(self, mesh: Mesh2D, p: float, boundary_nodes: np.ndarray, boundary_values: np.ndarray):
        if not p > 1.0:
            raise InvalidParameterError(f"p must exceed 1, got {p}")
        boundary_nodes = np.asarray(boundary_nodes, dtype=np.int64)
        boundary_values = np.asarray(boundary_values, dtype=float)
        if boundary_nodes.shape != boundary_values.shape:
            raise InvalidParameterError("boundary nodes and values differ in length")
        if len(np.unique(boundary_nodes)) != len(boundary_nodes):
            raise InvalidParameterError("a boundary node carries more than one value")
        if not np.all(np.isfinite(boundary_values)):
            raise InvalidParameterError("boundary data must be finite")
        missing = np.setdiff1d(mesh.boundary_nodes(), boundary_nodes)
        if missing.size:
            raise InvalidParameterError(f"{missing.size} boundary nodes have no prescribed value")
        self.mesh = mesh
        self.p = p
        self.boundary_nodes = boundary_nodes
        self.boundary_values = boundary_values

    @classmethod
    def from_function(cls, mesh: Mesh2D, p: float, data: BoundaryData) -> "DirichletProblem":
        nodes = mesh.boundary_nodes()
        return cls(mesh, p, nodes, np.asarray(data(mesh.vertices[nodes]), dtype=float))

    @classmethod
    def from_tags(cls, mesh: Mesh2D, p: float, data: Mapping[str, BoundaryData]) -> "DirichletProblem":
        """Per-tag data; a node shared by several tags takes the first listed tag's value."""
        values: Dict[int, float] = {}
        for tag, fn in data.items():
            nodes = mesh.boundary_nodes(tag)
            if nodes.size == 0:
                continue
            for node, value in zip(nodes, np.asarray(fn(mesh.vertices[nodes]), dtype=float)):
                values.setdefault(int(node), float(value))
        nodes = np.array(sorted(values), dtype=np.int64)
        return cls(mesh, p, nodes, np.array([values[i] for i in nodes]))


class DiscreteSolution(ArrayModel):
    values: Vector
    energy: float
    initial_energy: float
    iterations: int
    stages: int
    residual_norm: float
    gradient_fallbacks: int = 0
    log: List[SolverLogEntry] = Field(default_factory=list)


class _Assembler:
    """Element geometry and the regularized p-energy with its derivatives."""

    def __init__(self, mesh: Mesh2D, p: float):
        self.mesh = mesh
        self.p = p
        tri = mesh.triangles
        p0 = mesh.vertices[tri[:, 0]]
        basis = np.stack([mesh.vertices[tri[:, 1]] - p0, mesh.vertices[tri[:, 2]] - p0], axis=2)
        inv = np.linalg.inv(basis)
        # rows: gradients of the three barycentric functions on each triangle
        self.grads = np.stack([-inv[:, 0, :] - inv[:, 1, :], inv[:, 0, :], inv[:, 1, :]], axis=1)
        self.areas = mesh.areas
        self.rows = np.repeat(tri, 3, axis=1).ravel()
        self.cols = np.tile(tri, (1, 3)).ravel()
        self.n = len(mesh.vertices)

    def element_gradients(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("tij,ti->tj", self.grads, u[self.mesh.triangles])

    def energy(self, u: np.ndarray, delta: float) -> float:
        g = self.element_gradients(u)
        q = np.sum(g * g, axis=1) + delta * delta
        return float(np.sum(self.areas * q ** (0.5 * self.p)) / self.p)

    def gradient(self, u: np.ndarray, delta: float) -> np.ndarray:
        g = self.element_gradients(u)
        q = np.maximum(np.sum(g * g, axis=1) + delta * delta, Q_FLOOR)
        weight = self.areas * q ** (0.5 * self.p - 1.0)
        local = weight[:, None] * np.einsum("tij,tj->ti", self.grads, g)
        return np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(), minlength=self.n)

    def hessian(self, u: np.ndarray, delta: float) -> sparse.csr_matrix:
        g = self.element_gradients(u)
        q = np.maximum(np.sum(g * g, axis=1) + delta * delta, Q_FLOOR)
        gg = np.einsum("tij,tkj->tik", self.grads, self.grads)
        proj = np.einsum("tij,tj->ti", self.grads, g)
        local = (self.areas * q ** (0.5 * self.p - 1.0))[:, None, None] * gg
        local += ((self.p - 2.0) * self.areas * q ** (0.5 * self.p - 2.0))[:, None, None] * proj[:, :, None] * proj[:, None, :]
        return sparse.coo_matrix((local.ravel(), (self.rows, self.cols)), shape=(self.n, self.n)).tocsr()

    def stiffness(self) -> sparse.csr_matrix:
        gg = np.einsum("tij,tkj->tik", self.grads, self.grads) * self.areas[:, None, None]
        return sparse.coo_matrix((gg.ravel(), (self.rows, self.cols)), shape=(self.n, self.n)).tocsr()


def _solve_reduced(matrix: sparse.csr_matrix, rhs: np.ndarray) -> Optional[np.ndarray]:
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        try:
            x = spsolve(matrix.tocsc(), rhs)
        except (MatrixRankWarning, RuntimeError) as exc:
            logger.warning(f"Singular Newton system: {exc}")
            return None
    return x if np.all(np.isfinite(x)) else None


def harmonic_guess(prob: DirichletProblem) -> np.ndarray:
    asm = _Assembler(prob.mesh, 2.0)
    u = np.zeros(asm.n)
    u[prob.boundary_nodes] = prob.boundary_values
    free = np.setdiff1d(np.arange(asm.n), prob.boundary_nodes)
    if free.size == 0:
        return u
    k = asm.stiffness()
    rhs = -k[free][:, prob.boundary_nodes] @ prob.boundary_values
    sol = _solve_reduced(k[free][:, free], rhs)
    if sol is None:
        raise SolverError("the discrete Laplacian is singular on this mesh")
    u[free] = sol
    return u


def solve_dirichlet(prob: DirichletProblem, tol: Optional[float] = None,
                    schedule: Optional[Sequence[float]] = None, max_newton: Optional[int] = None) -> DiscreteSolution:
    """Minimize sum_T area (|grad u|^2 + delta^2)^{p/2} / p with damped Newton, annealing delta to its last value."""
    tol = settings.SOLVER_TOL if tol is None else tol
    schedule = list(settings.DELTA_SCHEDULE if schedule is None else schedule)
    max_newton = settings.SOLVER_MAX_NEWTON if max_newton is None else max_newton
    if not schedule:
        raise InvalidParameterError("regularization schedule is empty")

    asm = _Assembler(prob.mesh, prob.p)
    free = np.setdiff1d(np.arange(asm.n), prob.boundary_nodes)
    u = harmonic_guess(prob)
    final_delta = schedule[-1]
    initial_energy = asm.energy(u, final_delta)

    log: List[SolverLogEntry] = []
    iterations = 0
    stages = 0
    fallbacks = 0

    def free_gradient(values, delta):
        return asm.gradient(values, delta)[free]

    if free.size and np.max(np.abs(free_gradient(u, final_delta))) > tol:
        for delta in schedule:
            stages += 1
            stage_tol = tol if delta == final_delta else max(tol, 1e-8)
            for _ in range(max_newton):
                grad = free_gradient(u, delta)
                grad_norm = float(np.max(np.abs(grad)))
                energy = asm.energy(u, delta)
                log.append(SolverLogEntry(iter=iterations, energy=energy, grad_norm=grad_norm, delta=delta))
                if grad_norm <= stage_tol:
                    break
                hess = asm.hessian(u, delta)[free][:, free]
                step = _solve_reduced(hess, -grad)
                if step is None or float(grad @ step) >= 0.0:
                    fallbacks += 1
                    step = -grad
                slope = float(grad @ step)
                t = 1.0
                trial = u.copy()
                while True:
                    trial[free] = u[free] + t * step
                    # rounding slack: near the optimum the energy change is below machine resolution
                    if asm.energy(trial, delta) <= energy + ARMIJO_C * t * slope + 1e-15 * abs(energy):
                        break
                    t *= BACKTRACK
                    if t < MIN_STEP:
                        raise LineSearchError(f"no energy decrease under full damping (delta={delta}, |grad|={grad_norm:.3e})")
                u = trial
                iterations += 1
                logger.debug(f"newton {iterations}: delta={delta:g}, step {t:g}, |grad| {grad_norm:.3e}")
                # Newton decrement below resolution: nothing left to gain at this delta
                if -slope * t < 1e-28:
                    break
            else:
                logger.warning(f"Newton iteration limit {max_newton} reached at delta={delta}")
    else:
        stages = 1

    final_grad = float(np.max(np.abs(free_gradient(u, final_delta)))) if free.size else 0.0
    energy = asm.energy(u, final_delta)
    logger.info(f"Dirichlet solve p={prob.p}: {iterations} Newton steps, {stages} stages, |grad| {final_grad:.3e}")
    if final_grad > tol:
        raise SolverError(f"Newton stopped at gradient norm {final_grad:.3e}, above tolerance {tol:.1e}")
    return DiscreteSolution(values=u, energy=energy, initial_energy=initial_energy, iterations=iterations,
                            stages=stages, residual_norm=final_grad, gradient_fallbacks=fallbacks, log=log)


def interpolate(sol: DiscreteSolution, mesh: Mesh2D, x) -> Tuple[float, np.ndarray]:
    """Barycentric value and P1 gradient at x."""
    x = np.asarray(x, dtype=float)
    locator = mesh.locator()
    t, bary = locator.locate(x)
    nodes = mesh.triangles[t]
    values = np.asarray(sol.values)[nodes]
    inv = locator.inverse[t]
    grads = np.stack([-inv[0] - inv[1], inv[0], inv[1]])
    return float(bary @ values), values @ grads


def interpolate_many(sol: DiscreteSolution, mesh: Mesh2D, points) -> np.ndarray:
    return np.array([interpolate(sol, mesh, x)[0] for x in np.atleast_2d(points)])


def comparison_check(mesh: Mesh2D, p: float, low: BoundaryData, high: BoundaryData, tol: Optional[float] = None) -> float:
    """Largest nodal excess of the solution with smaller boundary data over the one with larger data."""
    u_low = solve_dirichlet(DirichletProblem.from_function(mesh, p, low), tol)
    u_high = solve_dirichlet(DirichletProblem.from_function(mesh, p, high), tol)
    return float(np.max(np.asarray(u_low.values) - np.asarray(u_high.values)))


# ---------------------------------------------------------------------------
# Fundamental singular solution by exhaustion of the puncture
# ---------------------------------------------------------------------------

class FundamentalResult:
    def __init__(self, a: np.ndarray, center: np.ndarray, radius: float, h: float, epsilons: List[float],
                 meshes: List[Mesh2D], solutions: List[DiscreteSolution], report: SchemeReport):
        self.a = a
        self.center = center
        self.radius = radius
        self.h = h
        self.epsilons = epsilons
        self.meshes = meshes
        self.solutions = solutions
        self.report = report

    @property
    def finest(self) -> Tuple[Mesh2D, DiscreteSolution]:
        return self.meshes[-1], self.solutions[-1]

    def extrapolate(self, x) -> float:
        return extrapolate_in_epsilon(self, x)

    def extrapolated_field(self) -> ScalarField:
        return ScalarField(lambda pts: np.array([self.extrapolate(x) for x in np.atleast_2d(pts)]).reshape(np.shape(pts)[:-1]),
                           None, n=2, p=2.0, description="u_{1,a} (extrapolated in epsilon)", singular_points=[self.a])


def extrapolate_in_epsilon(result: FundamentalResult, x) -> float:
    """Polynomial extrapolation to epsilon = 0 through every solution whose punctured disk holds x."""
    x = np.asarray(x, dtype=float)
    eps, vals = [], []
    for epsilon, mesh, sol in zip(result.epsilons, result.meshes, result.solutions):
        if np.linalg.norm(x - result.a) > epsilon:
            eps.append(epsilon)
            vals.append(interpolate(sol, mesh, x)[0])
    if not eps:
        raise InvalidParameterError(f"{x.tolist()} lies inside every puncture")
    eps = np.array(eps)
    # Lagrange weights at zero
    weights = np.array([np.prod([e_j / (e_j - e_i) for j, e_j in enumerate(eps) if j != i]) for i, e_i in enumerate(eps)])
    return float(weights @ np.array(vals))


def _disk_parameters(g) -> Tuple[np.ndarray, float]:
    if isinstance(g, UnitDisk):
        if g.n != 2:
            raise InvalidParameterError("the fundamental-solution scheme is planar")
        return np.zeros(2), 1.0
    if isinstance(g, Disk) and len(g.center) == 2:
        return np.asarray(g.center, dtype=float), float(g.radius)
    raise InvalidParameterError(f"the fundamental-solution scheme needs a planar disk, got {g!r}")


def fundamental_solution(g, a, epsilons: Sequence[float] = (0.4, 0.2, 0.1, 0.05), h: float = 0.02,
                         p: float = 2.0, n: int = 2, tol: Optional[float] = None,
                         comparison_radius: float = 0.3, extrapolation_radius: float = 0.5) -> FundamentalResult:
    if abs(p - 2.0) > 1e-12 or n != 2:
        raise InvalidParameterError(f"the meshed scheme covers p = n = 2 only, got p={p}, n={n}")
    center, radius = _disk_parameters(g)
    a = np.asarray(a, dtype=float)
    if a.size != 2 or abs(np.linalg.norm(a - center) - radius) > 1e-9 * max(1.0, radius):
        raise InvalidParameterError(f"a={a.tolist()} is not on the boundary circle")
    epsilons = [float(e) for e in epsilons]
    if not epsilons or any(e <= 0.0 or e >= radius for e in epsilons):
        raise InvalidParameterError(f"epsilons must lie in (0, {radius})")
    if any(e1 <= e2 for e1, e2 in zip(epsilons, epsilons[1:])):
        raise InvalidParameterError("epsilon schedule must be strictly decreasing")
    tol_mono = settings.MONOTONICITY_TOL

    normal = (a - center) / radius
    v_ext = fields.ball_exterior_field(2, a, center=a + normal, radius=1.0)
    v_int = fields.ball_interior_field(2, a, center=a - normal, radius=1.0) if radius >= 1.0 else None

    meshes: List[Mesh2D] = []
    solutions: List[DiscreteSolution] = []
    report = SchemeReport(epsilons=epsilons)
    sandwich_bad = 0
    sandwich_checked = 0
    for epsilon in epsilons:
        mesh = mesh_disk(radius, a, epsilon, h, center=center)
        prob = DirichletProblem.from_tags(mesh, p, {"inner-arc": v_ext.value, "outer": lambda pts: np.zeros(len(pts))})
        sol = solve_dirichlet(prob, tol)
        meshes.append(mesh)
        solutions.append(sol)

        # discrete barriers: the tangent-ball fields solved with their own traces on the same mesh
        nodes = mesh.interior_nodes()
        pts = mesh.vertices[nodes]
        away = np.linalg.norm(pts - a, axis=1) >= 2.0 * epsilon
        vals = np.asarray(sol.values)[nodes][away]
        upper = solve_dirichlet(DirichletProblem.from_function(mesh, p, v_ext.value), tol)
        upper_bad = vals > np.asarray(upper.values)[nodes][away] + tol_mono
        lower_bad = np.zeros_like(upper_bad)
        if v_int is not None:
            lower = solve_dirichlet(DirichletProblem.from_function(mesh, p, v_int.value), tol)
            lower_bad = np.asarray(lower.values)[nodes][away] > vals + tol_mono
        sandwich_bad += int(upper_bad.sum() + lower_bad.sum())
        sandwich_checked += int(away.sum())
        logger.info(f"epsilon={epsilon}: energy {sol.energy:.6g}, sandwich violations {int(upper_bad.sum() + lower_bad.sum())}")

    # u_eps increases with eps: the finer puncture must stay below the coarser one
    rows = []
    for (eps_c, mesh_c, sol_c), (eps_f, mesh_f, sol_f) in zip(
            zip(epsilons, meshes, solutions), zip(epsilons[1:], meshes[1:], solutions[1:])):
        nodes = mesh_c.interior_nodes()
        pts = mesh_c.vertices[nodes]
        shared = np.linalg.norm(pts - a, axis=1) >= eps_c + h
        fine_vals = interpolate_many(sol_f, mesh_f, pts[shared])
        excess = fine_vals - np.asarray(sol_c.values)[nodes][shared]
        worst = float(excess.max()) if excess.size else 0.0
        rows.append(MonotonicityRow(eps_coarse=eps_c, eps_fine=eps_f, max_violation=max(worst, 0.0),
                                    n_points=int(shared.sum()), passed=worst <= tol_mono))

    result = FundamentalResult(a, center, radius, h, epsilons, meshes, solutions, report)
    comparison, extrapolated = _oracle_errors(result, comparison_radius, extrapolation_radius)
    passed = all(r.passed for r in rows) and sandwich_bad == 0
    result.report = SchemeReport(epsilons=epsilons, monotonicity=rows, sandwich_violations=sandwich_bad,
                                 sandwich_checked=sandwich_checked, comparison_error=comparison,
                                 extrapolated_error=extrapolated, passed=passed)
    if not passed:
        logger.warning(f"Scheme checks failed: {result.report.model_dump()}")
    return result


def _oracle_errors(result: FundamentalResult, comparison_radius: float, extrapolation_radius: float
                   ) -> Tuple[Optional[float], float]:
    """Relative sup errors of the finest solution against the exact punctured solution (unit disk only)
    and of the epsilon-extrapolated field against the normalized Poisson kernel."""
    mesh, sol = result.finest
    nodes = mesh.interior_nodes()
    pts = mesh.vertices[nodes]
    depth = result.radius - np.linalg.norm(pts - result.center, axis=1)
    dist = np.linalg.norm(pts - result.a, axis=1)
    values = np.asarray(sol.values)[nodes]

    comparison = None
    if result.radius == 1.0 and np.allclose(result.center, 0.0):
        exact = fields.punctured_disk_field(result.a, result.epsilons[-1])
        mask = (dist >= comparison_radius) & (depth >= 0.05)
        if mask.any():
            reference = exact.value(pts[mask])
            comparison = float(np.max(np.abs(values[mask] - reference) / np.abs(reference)))

    kernel = fields.ball_interior_field(2, result.a, center=result.center, radius=result.radius)
    mask = (dist >= extrapolation_radius) & (depth >= 0.05 * result.radius)
    sample = pts[mask]
    reference = kernel.value(sample)
    limits = np.array([extrapolate_in_epsilon(result, x) for x in sample])
    extrapolated = float(np.max(np.abs(limits - reference) / np.abs(reference))) if sample.size else math.nan
    logger.info(f"Oracle errors: finest vs exact {comparison}, extrapolated vs kernel {extrapolated:.3e}")
    return comparison, extrapolated

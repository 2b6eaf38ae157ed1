import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from pharmonic.core.config import settings
from pharmonic.core.exceptions import (
    DegenerateGradientError,
    ExclusionError,
    InvalidParameterError,
    PharmonicError,
)
from pharmonic.schemas import (
    BlowupReport,
    BoundaryLimitReport,
    Disk,
    DomainGeometry,
    EllipticityReport,
    GrowthBoundsReport,
    HalfPlane,
    RatioReport,
    ReflectionCheckReport,
    ResidualReport,
    UnitDisk,
)
from pharmonic.services import fields, geometry
from pharmonic.services.fields import ScalarField
from pharmonic.services.spectral import SpectralPair, lambda_eig

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Strong-form p-Laplace residual
# ---------------------------------------------------------------------------

# fourth-order first-derivative weights at offsets -2h, -h, +h, +2h
STENCIL_OFFSETS = (-2.0, -1.0, 1.0, 2.0)
STENCIL_WEIGHTS = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)


def fd_hessian(u: ScalarField, x: np.ndarray, h: float, from_values: bool = False) -> np.ndarray:
    """Fourth-order central-difference Hessian.

    The default differentiates the gradient evaluator, which is exact for affine fields;
    `from_values=True` works on values: the five-point second difference on the diagonal and the
    product of the first-derivative stencils off it.
    """
    n = x.size
    eye = np.eye(n) * h
    if not from_values:
        hess = sum(w * u.gradient(x + s * eye) for s, w in zip(STENCIL_OFFSETS, STENCIL_WEIGHTS)) / h
        return 0.5 * (hess + hess.T)

    f0 = u.value(x)
    hess = np.empty((n, n))
    for i in range(n):
        second = (-u.value(x + 2.0 * eye[i]) + 16.0 * u.value(x + eye[i]) - 30.0 * f0
                  + 16.0 * u.value(x - eye[i]) - u.value(x - 2.0 * eye[i]))
        hess[i, i] = second / (12.0 * h * h)
        for j in range(i + 1, n):
            mixed = 0.0
            for si, wi in zip(STENCIL_OFFSETS, STENCIL_WEIGHTS):
                for sj, wj in zip(STENCIL_OFFSETS, STENCIL_WEIGHTS):
                    mixed += wi * wj * u.value(x + si * eye[i] + sj * eye[j])
            hess[i, j] = hess[j, i] = mixed / (h * h)
    return hess


def plaplace_residual(u: ScalarField, p: float, x, h: Optional[float] = None,
                      from_values: bool = False) -> ResidualReport:
    h = settings.FD_STEP if h is None else h
    x = np.asarray(x, dtype=float)
    margin = settings.EXCLUSION_FACTOR * h
    dist = u.exclusion_distance(x)
    if dist < margin:
        raise ExclusionError(f"{u.description}: point {x.tolist()} is {dist:.3e} from a singularity (< {margin:.3e})")

    grad = u.gradient(x)
    gnorm = float(np.linalg.norm(grad))
    if gnorm < settings.GRADIENT_FLOOR:
        raise DegenerateGradientError(f"{u.description}: |Du| = {gnorm:.3e} at {x.tolist()}")

    hess = fd_hessian(u, x, h, from_values=from_values)
    laplacian = float(np.trace(hess))
    directional = float(grad @ hess @ grad) / (gnorm * gnorm)
    residual = gnorm ** (p - 2.0) * (laplacian + (p - 2.0) * directional)
    normalized = abs(residual) / max(gnorm ** (p - 1.0), settings.NORMALIZATION_FLOOR)
    return ResidualReport(point=x, h=h, residual=residual, gradient_norm=gnorm, normalized=normalized,
                          passed=normalized <= settings.RESIDUAL_THRESHOLD)


def convergence_order(u: ScalarField, p: float, x, steps: Sequence[float]) -> Optional[float]:
    """Least-squares slope of log|residual| against log h; None when rounding floors the residuals."""
    steps = list(steps)
    if len(steps) < 3:
        raise InvalidParameterError(f"convergence_order needs at least 3 steps, got {len(steps)}")
    pairs = []
    for h in steps:
        report = plaplace_residual(u, p, x, h)
        if abs(report.residual) > settings.ROUNDING_FLOOR:
            pairs.append((h, abs(report.residual)))
    if len(pairs) < 2:
        logger.debug(f"{u.description}: residuals at rounding floor, order skipped")
        return None
    hs, rs = np.log(np.array(pairs)).T
    slope, _ = np.polyfit(hs, rs, 1)
    return float(slope)


def sample_ball(n: int, count: int, seed: int = 0, radius: float = 1.0, center=None,
                min_radius: float = 0.0) -> np.ndarray:
    """Uniform samples of the ball of given radius (optionally with a hole around the centre)."""
    rng = np.random.default_rng(seed)
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    directions = rng.normal(size=(count, n))
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    lo = (min_radius / radius) ** n
    radii = radius * rng.uniform(lo, 1.0, count) ** (1.0 / n)
    return c + radii[:, None] * directions


def residual_sweep(u: ScalarField, p: float, points: Iterable, h: Optional[float] = None
                   ) -> Tuple[List[ResidualReport], int]:
    """Residual reports at admissible points, plus the number of points excluded as inadmissible."""
    reports: List[ResidualReport] = []
    skipped = 0
    for x in points:
        try:
            reports.append(plaplace_residual(u, p, x, h))
        except (ExclusionError, DegenerateGradientError) as exc:
            logger.debug(f"Skipping sample: {exc.detail}")
            skipped += 1
    return reports, skipped


def conformal_invariance_check(u: ScalarField, center, power: float, points: Iterable,
                               h: Optional[float] = None) -> List[ResidualReport]:
    inverted = fields.invert_field(u, center, power)
    p = inverted.p if inverted.p is not None else float(inverted.n)
    reports, _ = residual_sweep(inverted, p, points, h)
    return reports


# ---------------------------------------------------------------------------
# Spherical reduction in three dimensions
# ---------------------------------------------------------------------------

def spherical_residual_3d(pair: SpectralPair, beta: float, phi: float, theta: float,
                          h: Optional[float] = None, amplitude: float = 1.0) -> float:
    """Left minus right side of the spherical p-harmonic problem on S^2 for v = A sin^beta(phi) w(theta)."""
    h = settings.FD_STEP if h is None else h
    if math.sin(phi) < 0.05:
        raise ExclusionError(f"phi={phi} is too close to a pole")
    p, profile = pair.p, pair.profile
    m = 0.5 * (p - 2.0)

    def v(t, f):
        return amplitude * math.sin(f) ** beta * float(profile.value(t))

    def partials(t, f):
        v_t = (v(t + h, f) - v(t - h, f)) / (2.0 * h)
        v_f = (v(t, f + h) - v(t, f - h)) / (2.0 * h)
        return v_t, v_f

    def q(t, f):
        v_t, v_f = partials(t, f)
        s = math.sin(f)
        return beta * beta * v(t, f) ** 2 + v_f ** 2 + v_t ** 2 / (s * s), v_t, v_f

    def phi_flux(t, f):
        qq, _, v_f = q(t, f)
        return math.sin(f) * qq ** m * v_f

    def theta_flux(t, f):
        qq, v_t, _ = q(t, f)
        return qq ** m * v_t

    s = math.sin(phi)
    d_phi = (phi_flux(theta, phi + h) - phi_flux(theta, phi - h)) / (2.0 * h)
    d_theta = (theta_flux(theta + h, phi) - theta_flux(theta - h, phi)) / (2.0 * h)
    lhs = -d_phi / s - d_theta / (s * s)
    q0, _, _ = q(theta, phi)
    rhs = lambda_eig(3, beta, p) * q0 ** m * v(theta, phi)
    return lhs - rhs


# ---------------------------------------------------------------------------
# Boundary behaviour
# ---------------------------------------------------------------------------

def direction_fan(normal, count: int = 32) -> np.ndarray:
    """`count` unit vectors of the plane pointing strictly into the domain (negative <sigma, normal>)."""
    normal = np.asarray(normal, dtype=float)
    base = math.atan2(-normal[1], -normal[0])
    angles = base + np.linspace(-0.5 * math.pi, 0.5 * math.pi, count + 2)[1:-1]
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def boundary_limit(u: ScalarField, a, normal, directions, ts: Sequence[float] = (2e-3, 1e-3)) -> BoundaryLimitReport:
    a = np.asarray(a, dtype=float)
    normal = np.asarray(normal, dtype=float)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if len(ts) < 2:
        raise InvalidParameterError("boundary_limit needs at least two values of t")
    inward = directions @ normal
    if np.any(inward >= 0.0):
        raise InvalidParameterError("every direction must point into the domain (<sigma, n_a> < 0)")

    t_big, t_small = sorted(ts)[1], sorted(ts)[0]
    estimates = np.empty(len(directions))
    for idx, sigma in enumerate(directions):
        sigma = sigma / np.linalg.norm(sigma)
        f_big = t_big * u.value(a + t_big * sigma)
        f_small = t_small * u.value(a + t_small * sigma)
        # eliminate the linear term of f(t) = L + c t
        estimates[idx] = (t_big * f_small - t_small * f_big) / (t_big - t_small)
    expected = -inward / np.linalg.norm(directions, axis=1)
    return BoundaryLimitReport(a=a, normal=normal, directions=directions, estimates=estimates, expected=expected,
                               max_error=float(np.max(np.abs(estimates - expected))))


def blowup_convergence(u: ScalarField, g: DomainGeometry, a, normal, radii: Sequence[float] = (0.1, 0.05, 0.025),
                       directions: Optional[np.ndarray] = None) -> BlowupReport:
    """Distance of r * u~(a + r y), |y| = 1, from the half-space profile <y, -n_a>."""
    a = np.asarray(a, dtype=float)
    normal = np.asarray(normal, dtype=float)
    if directions is None:
        angles = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False) + 1e-3
        directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    extended = fields.extend_field(u, g)
    errors = []
    for r in radii:
        scaled = np.array([r * extended.value(a + r * y) for y in directions])
        profile = -(directions @ normal) / np.sum(directions ** 2, axis=1)
        errors.append(float(np.max(np.abs(scaled - profile))))
    order = None
    if len(radii) >= 2 and min(errors) > 0.0:
        order = float(np.polyfit(np.log(radii), np.log(errors), 1)[0])
    logger.info(f"Blow-up errors {errors} over radii {list(radii)}, order {order}")
    return BlowupReport(radii=list(radii), errors=errors, order=order)


def growth_bounds_check(u: ScalarField, a, g: DomainGeometry, samples, tol: float = 1e-9) -> GrowthBoundsReport:
    """Sandwich between the unit tangent-ball solutions at a and the fitted constant of u <= C rho / |x-a|^2."""
    if not isinstance(g, (UnitDisk, Disk)):
        raise InvalidParameterError(f"growth bounds need a disk geometry, got {g.kind}")
    a = np.asarray(a, dtype=float)
    _, normal, _ = geometry.boundary_projection(g, a)
    inner = fields.ball_interior_field(a.size, a, center=a - normal)
    outer = fields.ball_exterior_field(a.size, a, center=a + normal)

    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    rho = -geometry.signed_distance(g, samples)
    inside = rho > 0.0
    skipped = int((~inside).sum())
    if skipped:
        logger.debug(f"Growth bounds: skipping {skipped} samples on or outside the boundary")
    samples, rho = samples[inside], rho[inside]
    if not len(samples):
        raise InvalidParameterError("growth bounds need at least one interior sample")

    values = u.value(samples)
    lower = inner.value(samples)
    upper = outer.value(samples)
    in_inner = np.linalg.norm(samples - (a - normal), axis=1) < 1.0
    lower_bad = in_inner & (lower - values > tol * np.maximum(1.0, np.abs(lower)))
    upper_bad = values - upper > tol * np.maximum(1.0, np.abs(upper))

    dist2 = np.sum((samples - a) ** 2, axis=1)
    fitted = float(np.max(values * dist2 / rho))
    report = GrowthBoundsReport(n_samples=len(samples), n_skipped=skipped, lower_violations=int(lower_bad.sum()),
                                upper_violations=int(upper_bad.sum()), fitted_c=fitted,
                                passed=not (lower_bad.any() or upper_bad.any()))
    if not report.passed:
        logger.warning(f"Growth bounds violated: {report.lower_violations} lower, {report.upper_violations} upper")
    return report


# ---------------------------------------------------------------------------
# Reflected equation
# ---------------------------------------------------------------------------

class CoefficientField:
    """eta -> |det J| |J^t eta|^{p-2} J J^t eta, with J the reflection Jacobian at x."""

    def __init__(self, x: np.ndarray, p: float, jacobian: np.ndarray):
        self.x = x
        self.p = p
        self.jacobian = jacobian
        self.det = abs(float(np.linalg.det(jacobian)))

    def __call__(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        z = self.jacobian.T @ eta
        norm = float(np.linalg.norm(z))
        if norm == 0.0:
            return np.zeros_like(eta)
        return self.det * norm ** (self.p - 2.0) * (self.jacobian @ z)

    def derivative(self, eta, step: float = 1e-6) -> np.ndarray:
        """Central differences: entry (j, i) is dA_j / d eta_i."""
        eta = np.asarray(eta, dtype=float)
        h = step * max(1.0, float(np.linalg.norm(eta)))
        jac = np.empty((eta.size, eta.size))
        for i in range(eta.size):
            e = np.zeros(eta.size)
            e[i] = h
            jac[:, i] = (self(eta + e) - self(eta - e)) / (2.0 * h)
        return jac


def transformed_coefficients(g: DomainGeometry, p: float, x) -> CoefficientField:
    x = np.asarray(x, dtype=float)
    data = geometry.reflect(g, x)
    if data.signed_distance < -1e-12:
        raise InvalidParameterError(f"transformed coefficients live outside the domain, got sd={data.signed_distance}")
    return CoefficientField(x, p, data.jacobian)


def ellipticity_sample(g: DomainGeometry, p: float, tube_points, eta_samples, xi_samples=None,
                       threshold: float = 0.0) -> EllipticityReport:
    lower = math.inf
    upper = 0.0
    count = 0
    eta_samples = np.atleast_2d(np.asarray(eta_samples, dtype=float))
    for x in np.atleast_2d(np.asarray(tube_points, dtype=float)):
        coeff = transformed_coefficients(g, p, x)
        for eta in eta_samples:
            scale = float(np.linalg.norm(eta)) ** (p - 2.0)
            m = coeff.derivative(eta)
            if xi_samples is None:
                form = float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])
            else:
                xi = np.atleast_2d(np.asarray(xi_samples, dtype=float))
                form = float(np.min(np.einsum("ki,ij,kj->k", xi, m, xi) / np.sum(xi * xi, axis=1)))
            lower = min(lower, form / scale)
            upper = max(upper, float(np.abs(m).sum()) / scale)
            count += 1
    report = EllipticityReport(lower_gamma=lower, upper_gamma=upper, n_samples=count,
                               passed=lower > threshold)
    if not report.passed:
        logger.warning(f"Ellipticity lower constant {lower:.4g} is not above {threshold}")
    return report


def tube_samples(g: DomainGeometry, count: int, depth: float, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Uniform points of the outer collar 0 <= sd <= depth, and their boundary projections."""
    rng = np.random.default_rng(seed)
    if isinstance(g, (UnitDisk, Disk)):
        dim = g.n if isinstance(g, UnitDisk) else len(g.center)
        c = np.zeros(dim) if isinstance(g, UnitDisk) else np.asarray(g.center, dtype=float)
        radius = 1.0 if isinstance(g, UnitDisk) else g.radius
        nu = rng.normal(size=(count, dim))
        nu /= np.linalg.norm(nu, axis=1)[:, None]
        boundary = c + radius * nu
        return boundary + rng.uniform(0.0, depth, count)[:, None] * nu, boundary
    if isinstance(g, HalfPlane):
        boundary = np.column_stack([rng.uniform(-1.0, 1.0, (count, g.n - 1)), np.zeros(count)])
        points = boundary.copy()
        points[:, -1] = -rng.uniform(0.0, depth, count)
        return points, boundary
    raise InvalidParameterError(f"tube sampling is implemented for disks and the half-plane, not {g.kind}")


def reflection_check(g: DomainGeometry, p: float, count: int = 200, seed: int = 0, near_depth: float = 0.1,
                     eta_count: int = 8) -> ReflectionCheckReport:
    """Transformed coefficients of the reflected equation: A(x, 0) = 0, A = |eta|^{p-2} eta on the boundary,
    the ellipticity constant above 0.5 min(1, p-1) near the boundary and positive over half the tube."""
    if not p > 1.0:
        raise InvalidParameterError(f"p must exceed 1, got {p}")
    rng = np.random.default_rng(seed + 1)
    etas = rng.normal(size=(eta_count, _dimension(g)))
    etas *= (rng.uniform(0.5, 2.0, eta_count) / np.linalg.norm(etas, axis=1))[:, None]

    half_tube = min(0.5 * geometry.tube_radius(g), 1.0)
    near_depth = min(near_depth, half_tube)
    near_points, boundary = tube_samples(g, count, near_depth, seed)
    tube_points, _ = tube_samples(g, count, half_tube, seed + 2)

    zero_error = 0.0
    for x in near_points:
        zero_error = max(zero_error, float(np.max(np.abs(transformed_coefficients(g, p, x)(np.zeros(x.size))))))
    boundary_error = 0.0
    for xi in boundary:
        coeff = transformed_coefficients(g, p, xi)
        for eta in etas:
            target = np.linalg.norm(eta) ** (p - 2.0) * eta
            boundary_error = max(boundary_error, float(np.max(np.abs(coeff(eta) - target))))

    threshold = 0.5 * min(1.0, p - 1.0)
    near = ellipticity_sample(g, p, near_points, etas, threshold=threshold)
    tube = ellipticity_sample(g, p, tube_points, etas, threshold=0.0)
    passed = zero_error == 0.0 and boundary_error <= 1e-10 and near.passed and tube.passed
    logger.info(f"Reflection check p={p}: boundary error {boundary_error:.2e}, gamma {near.lower_gamma:.4g} "
                f"near / {tube.lower_gamma:.4g} tube")
    return ReflectionCheckReport(p=p, n_points=count, zero_error=zero_error, boundary_error=boundary_error,
                                 threshold=threshold, near=near, tube=tube, passed=passed)


def _dimension(g: DomainGeometry) -> int:
    if isinstance(g, (UnitDisk, HalfPlane)):
        return g.n
    if isinstance(g, Disk):
        return len(g.center)
    return 2


# ---------------------------------------------------------------------------
# Classification diagnostic
# ---------------------------------------------------------------------------

def ratio_diagnostic(u: ScalarField, v: ScalarField, samples) -> RatioReport:
    ratios = []
    skipped = 0
    for x in np.atleast_2d(np.asarray(samples, dtype=float)):
        try:
            denominator = v.value(x)
        except PharmonicError:
            skipped += 1
            continue
        if denominator <= 0.0:
            skipped += 1
            continue
        ratios.append(u.value(x) / denominator)
    if not ratios:
        raise InvalidParameterError("no sample with v > 0")
    ratios = np.array(ratios)
    mean = float(ratios.mean())
    return RatioReport(mean_ratio=mean, max_deviation=float(np.max(np.abs(ratios - mean))), n_used=len(ratios),
                       n_skipped=skipped)

import logging
import math
from functools import lru_cache
from typing import Callable, List, Optional, Sequence

import numpy as np

from pharmonic.core.exceptions import InvalidParameterError, SingularPointError
from pharmonic.schemas import (
    BallSpec,
    ChiSpec,
    CoordinateSpec,
    DomainGeometry,
    ExtendedSpec,
    FundamentalRadialSpec,
    InvertedSpec,
    PuncturedDiskSpec,
    RadialPowerSpec,
    ScaledSpec,
    SeparableSpec,
)
from pharmonic.services import geometry, spectral

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-14

ArrayFn = Callable[[np.ndarray], np.ndarray]


class ScalarField:
    """A scalar function with gradient, evaluatable at one point (shape (n,)) or at rows of an (m, n) array.

    `singular_points` are excluded from evaluation; `singular_distance` optionally
    measures the distance to a lower-dimensional singular set (an axis, say) that
    verification should keep away from.
    """

    def __init__(
        self,
        value_fn: ArrayFn,
        gradient_fn: Optional[ArrayFn],
        n: int,
        p: Optional[float] = None,
        description: str = "",
        singular_points: Sequence[Sequence[float]] = (),
        singular_distance: Optional[ArrayFn] = None,
    ):
        self._value_fn = value_fn
        self._gradient_fn = gradient_fn
        self.n = n
        self.p = p
        self.description = description
        self.singular_points: List[np.ndarray] = [np.asarray(s, dtype=float) for s in singular_points]
        self.singular_distance = singular_distance

    def __repr__(self) -> str:
        return f"ScalarField({self.description!r}, n={self.n}, p={self.p})"

    @property
    def has_analytic_gradient(self) -> bool:
        return self._gradient_fn is not None

    def _prepare(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise InvalidParameterError(f"{self.description}: expected points of dimension {self.n}, got {x.shape[-1]}")
        for s in self.singular_points:
            if np.any(np.linalg.norm(x - s, axis=-1) <= SINGULAR_TOL):
                raise SingularPointError(f"{self.description} is singular at {s.tolist()}")
        return x

    def value(self, x):
        x = self._prepare(x)
        out = self._value_fn(x)
        return float(out) if x.ndim == 1 else out

    def gradient(self, x) -> np.ndarray:
        x = self._prepare(x)
        if self._gradient_fn is None:
            return self.fd_gradient(x)
        return self._gradient_fn(x)

    def fd_gradient(self, x, step: float = 1e-6) -> np.ndarray:
        x = self._prepare(x)
        grad = np.empty(x.shape)
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = step
            grad[..., j] = (self._value_fn(x + e) - self._value_fn(x - e)) / (2.0 * step)
        return grad

    def __call__(self, x):
        return self.value(x), self.gradient(x)

    def exclusion_distance(self, x) -> float:
        """Distance from x to the nearest recorded singularity (inf when there is none)."""
        x = np.asarray(x, dtype=float)
        dist = math.inf
        for s in self.singular_points:
            dist = min(dist, float(np.linalg.norm(x - s)))
        if self.singular_distance is not None:
            dist = min(dist, float(self.singular_distance(x)))
        return dist


def _axis(i: int, n: int) -> int:
    if not 1 <= i <= n:
        raise InvalidParameterError(f"axis index i={i} outside 1..{n}")
    return i - 1


def coordinate_field(i: int, n: int, p: float = 2.0) -> ScalarField:
    j = _axis(i, n)
    e = np.eye(n)[j]
    return ScalarField(
        lambda x: x[..., j].copy(),
        lambda x: np.broadcast_to(e, x.shape).copy(),
        n=n, p=p, description=f"x_{i}",
    )


def chi_field(i: int, n: int) -> ScalarField:
    j = _axis(i, n)
    e = np.eye(n)[j]

    def value(x):
        return x[..., j] / np.sum(x * x, axis=-1)

    def gradient(x):
        r2 = np.sum(x * x, axis=-1)[..., None]
        return e / r2 - 2.0 * x[..., j][..., None] * x / r2 ** 2

    return ScalarField(value, gradient, n=n, p=float(n), description=f"chi_{i}", singular_points=[np.zeros(n)])


def _ball_field(n: int, a, center, radius: float, exterior: bool) -> ScalarField:
    a = np.asarray(a, dtype=float)
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if a.size != n or c.size != n:
        raise InvalidParameterError(f"a and center must have dimension {n}")
    if abs(np.linalg.norm(a - c) - radius) > 1e-9 * max(1.0, radius):
        raise InvalidParameterError(f"a={a.tolist()} is not on the sphere |x - c| = {radius}")
    sign = -1.0 if exterior else 1.0

    # U = sign * (R^2 - |x - c|^2) / (2R |x - a|^2); normalized so |x - a| U -> -<sigma, n_a>
    def value(x):
        y = x - c
        num = radius * radius - np.sum(y * y, axis=-1)
        den = 2.0 * radius * np.sum((x - a) ** 2, axis=-1)
        return sign * num / den

    def gradient(x):
        y = x - c
        d = x - a
        num = (radius * radius - np.sum(y * y, axis=-1))[..., None]
        den = np.sum(d * d, axis=-1)[..., None]
        return -sign * (y * den + num * d) / (radius * den * den)

    name = "U^e" if exterior else "U^i"
    return ScalarField(value, gradient, n=n, p=float(n), description=f"{name}(a={a.tolist()}, c={c.tolist()}, R={radius})",
                       singular_points=[a])


def ball_interior_field(n: int, a, center=None, radius: float = 1.0) -> ScalarField:
    return _ball_field(n, a, center, radius, exterior=False)


def ball_exterior_field(n: int, a, center=None, radius: float = 1.0) -> ScalarField:
    return _ball_field(n, a, center, radius, exterior=True)


def inversion(x: np.ndarray, center: np.ndarray, power: float) -> np.ndarray:
    y = x - center
    return center + power * y / np.sum(y * y, axis=-1)[..., None]


def inversion_jacobian(x: np.ndarray, center: np.ndarray, power: float) -> np.ndarray:
    """Symmetric Jacobian s (I/|y|^2 - 2 y y^t/|y|^4), stacked over rows."""
    y = x - center
    r2 = np.sum(y * y, axis=-1)[..., None, None]
    eye = np.eye(x.shape[-1])
    return power * (eye / r2 - 2.0 * y[..., :, None] * y[..., None, :] / r2 ** 2)


def invert_field(u: ScalarField, center, power: float = 1.0) -> ScalarField:
    if not power > 0.0:
        raise InvalidParameterError(f"inversion power must be positive, got {power}")
    c = np.asarray(center, dtype=float)
    if c.size != u.n:
        raise InvalidParameterError(f"inversion center must have dimension {u.n}")

    def value(x):
        return u._value_fn(inversion(x, c, power))

    def gradient(x):
        jac = inversion_jacobian(x, c, power)
        g = u.gradient(inversion(x, c, power))
        return np.einsum("...ij,...j->...i", jac, g)

    singular = [c]
    for s in u.singular_points:
        if np.linalg.norm(s - c) > SINGULAR_TOL:
            singular.append(inversion(s, c, power))
    singular_distance = None
    if u.singular_distance is not None:
        singular_distance = lambda x: u.singular_distance(inversion(np.asarray(x, dtype=float), c, power))

    return ScalarField(value, gradient, n=u.n, p=u.p, description=f"({u.description})∘I[{c.tolist()}, {power}]",
                       singular_points=singular, singular_distance=singular_distance)


def _polar_separable(pair: spectral.SpectralPair, n: int) -> ScalarField:
    """rho^beta w(t) in the (x_1, x_2) plane. For n = 2 the angle is the polar one from x_1;
    for n >= 3 it is the first Euler angle t_1 = atan2(x_1, x_2)."""
    beta, profile = pair.beta, pair.profile

    def chart(x):
        if n == 2:
            rho = np.hypot(x[..., 0], x[..., 1])
            t = np.mod(np.arctan2(x[..., 1], x[..., 0]), geometry.TWO_PI)
            # e_rho, e_t in (x_1, x_2) components
            e_rho = np.stack([np.cos(t), np.sin(t)], axis=-1)
            e_t = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        else:
            rho, t = geometry.planar_chart(x)
            e_rho = np.stack([np.sin(t), np.cos(t)], axis=-1)
            e_t = np.stack([np.cos(t), -np.sin(t)], axis=-1)
        return rho, t, e_rho, e_t

    def value(x):
        rho, t, _, _ = chart(x)
        return np.power(rho, beta) * profile.value(t)

    def gradient(x):
        rho, t, e_rho, e_t = chart(x)
        w, wp = profile.evaluate(t)
        scale = np.power(rho, beta - 1.0)
        planar = (beta * w * scale)[..., None] * e_rho + (wp * scale)[..., None] * e_t
        grad = np.zeros(x.shape)
        grad[..., :2] = planar
        return grad

    if n == 2:
        return ScalarField(value, gradient, n=2, p=pair.p, description=f"separable_2d(p={pair.p}, k={pair.k})",
                           singular_points=[np.zeros(2)])
    return ScalarField(value, gradient, n=n, p=pair.p, description=f"separable_nd(p={pair.p}, k={pair.k}, n={n})",
                       singular_distance=lambda x: float(np.hypot(x[0], x[1])))


def separable_2d(pair: spectral.SpectralPair) -> ScalarField:
    return _polar_separable(pair, 2)


def separable_nd(pair: spectral.SpectralPair, n: int) -> ScalarField:
    if n < 3:
        raise InvalidParameterError(f"separable_nd needs n >= 3, got {n}; use separable_2d")
    return _polar_separable(pair, n)


def separable_singular(pair: spectral.SpectralPair, n: int) -> ScalarField:
    if abs(pair.p - n) > 1e-12:
        raise InvalidParameterError(f"separable singular fields need p = n, got p={pair.p}, n={n}")
    regular = separable_2d(pair) if n == 2 else separable_nd(pair, n)
    beta = pair.beta

    # u = r^{-2 beta} v, the unit inversion of the regular field v
    def value(x):
        r2 = np.sum(x * x, axis=-1)
        return np.power(r2, -beta) * regular._value_fn(x)

    def gradient(x):
        r2 = np.sum(x * x, axis=-1)
        v = regular._value_fn(x)
        grad_v = regular._gradient_fn(x)
        return np.power(r2, -beta)[..., None] * grad_v - (2.0 * beta * np.power(r2, -beta - 1.0) * v)[..., None] * x

    return ScalarField(value, gradient, n=n, p=pair.p, description=f"separable_singular(p={pair.p}, k={pair.k}, n={n})",
                       singular_points=[np.zeros(n)], singular_distance=regular.singular_distance)


def extend_field(u: ScalarField, g: DomainGeometry) -> ScalarField:
    """Odd continuation across the boundary: u inside, -u∘psi outside, both within the tube."""

    def one_point(x):
        data = geometry.reflect(g, x)
        if data.signed_distance <= 0.0:
            return u._value_fn(x), u.gradient(x)
        image = data.image
        return -u._value_fn(image), -data.jacobian.T @ u.gradient(image)

    def value(x):
        if x.ndim == 1:
            return one_point(x)[0]
        return np.array([one_point(row)[0] for row in x])

    def gradient(x):
        if x.ndim == 1:
            return one_point(x)[1]
        return np.array([one_point(row)[1] for row in x])

    return ScalarField(value, gradient, n=u.n, p=u.p, description=f"extend({u.description}, {g.kind})",
                       singular_points=u.singular_points, singular_distance=u.singular_distance)


def scale_field(u: ScalarField, factor: float) -> ScalarField:
    return ScalarField(
        lambda x: factor * u._value_fn(x),
        (lambda x: factor * u._gradient_fn(x)) if u.has_analytic_gradient else None,
        n=u.n, p=u.p, description=f"{factor}*({u.description})",
        singular_points=u.singular_points, singular_distance=u.singular_distance,
    )


def radial_power_field(n: int, exponent: float = 2.0, p: Optional[float] = None) -> ScalarField:
    def value(x):
        return np.power(np.sum(x * x, axis=-1), 0.5 * exponent)

    def gradient(x):
        r2 = np.sum(x * x, axis=-1)
        return (exponent * np.power(r2, 0.5 * exponent - 1.0))[..., None] * x

    singular = [np.zeros(n)] if exponent < 2.0 else []
    return ScalarField(value, gradient, n=n, p=p, description=f"|x|^{exponent}", singular_points=singular)


def fundamental_radial_field(n: int, p: float) -> ScalarField:
    """The radial p-harmonic function |x|^{(p-n)/(p-1)}, or log|x| when p = n."""
    if abs(p - n) < 1e-12:
        def value(x):
            return 0.5 * np.log(np.sum(x * x, axis=-1))

        def gradient(x):
            return x / np.sum(x * x, axis=-1)[..., None]

        return ScalarField(value, gradient, n=n, p=p, description="log|x|", singular_points=[np.zeros(n)])

    field = radial_power_field(n, (p - n) / (p - 1.0), p=p)
    field.singular_points = [np.zeros(n)]
    return field


def punctured_disk_field(a, epsilon: float) -> ScalarField:
    """Exact harmonic solution on the unit disk minus B_eps(a): 0 on the outer circle, U^e on the inner arc.

    On the unit disk the exterior tangent ball function equals U^i + 1, so the solution is U^i plus the
    harmonic measure of the inner arc, computed by the Cayley map onto a circular lune.
    """
    a = np.asarray(a, dtype=float)
    if a.size != 2 or abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise InvalidParameterError(f"a must be a point of the unit circle, got {a.tolist()}")
    if not 0.0 < epsilon < 1.0:
        raise InvalidParameterError(f"epsilon must lie in (0, 1), got {epsilon}")

    rot = complex(a[0], -a[1])
    half_width = math.sqrt(4.0 / epsilon ** 2 - 1.0)
    opening = math.acos(0.5 * epsilon)
    base = ball_interior_field(2, a)

    def cayley(x):
        zeta = rot * (x[..., 0] + 1j * x[..., 1])
        return zeta, 1j * (1.0 + zeta) / (1.0 - zeta)

    def value(x):
        _, z = cayley(x)
        ratio = (z - half_width) / (z + half_width)
        # the closure of the disk maps into Im >= 0; a negative zero there is rounding
        measure = (math.pi - np.arctan2(np.abs(ratio.imag), ratio.real)) / opening
        return base._value_fn(x) + measure

    def gradient(x):
        zeta, z = cayley(x)
        dz = 2j / (1.0 - zeta) ** 2
        dlog = 2.0 * half_width / (z * z - half_width * half_width)
        dF = rot * (-dlog * dz / opening)
        measure_grad = np.stack([np.imag(dF), np.real(dF)], axis=-1)
        return base._gradient_fn(x) + measure_grad

    return ScalarField(value, gradient, n=2, p=2.0, description=f"u_eps(a={a.tolist()}, eps={epsilon})",
                       singular_points=[a])


@lru_cache(maxsize=64)
def cached_pair(p: float, k: int, m: Optional[int] = None) -> spectral.SpectralPair:
    return spectral.tabulate(p, k, m)


def build_field(descriptor) -> ScalarField:
    """Construct a field from its JSON descriptor."""
    if isinstance(descriptor, CoordinateSpec):
        return coordinate_field(descriptor.i, descriptor.n, descriptor.p)
    if isinstance(descriptor, ChiSpec):
        return chi_field(descriptor.i, descriptor.n)
    if isinstance(descriptor, BallSpec):
        if descriptor.kind == "ball-interior":
            return ball_interior_field(descriptor.n, descriptor.a, descriptor.center, descriptor.radius)
        return ball_exterior_field(descriptor.n, descriptor.a, descriptor.center, descriptor.radius)
    if isinstance(descriptor, SeparableSpec):
        pair = cached_pair(descriptor.p, descriptor.k, descriptor.resolution)
        if descriptor.kind == "separable-singular":
            return separable_singular(pair, descriptor.n)
        return separable_2d(pair) if descriptor.n == 2 else separable_nd(pair, descriptor.n)
    if isinstance(descriptor, RadialPowerSpec):
        return radial_power_field(descriptor.n, descriptor.exponent)
    if isinstance(descriptor, FundamentalRadialSpec):
        return fundamental_radial_field(descriptor.n, descriptor.p)
    if isinstance(descriptor, PuncturedDiskSpec):
        return punctured_disk_field(descriptor.a, descriptor.epsilon)
    if isinstance(descriptor, InvertedSpec):
        return invert_field(build_field(descriptor.base), descriptor.center, descriptor.power)
    if isinstance(descriptor, ScaledSpec):
        return scale_field(build_field(descriptor.base), descriptor.factor)
    if isinstance(descriptor, ExtendedSpec):
        return extend_field(build_field(descriptor.base), descriptor.geometry)
    raise InvalidParameterError(f"unknown field descriptor {descriptor!r}")

import logging
import math
from typing import Optional, Tuple, Union

import numpy as np

from pharmonic.core.config import settings
from pharmonic.core.exceptions import InvalidParameterError, OutOfTubeError
from pharmonic.schemas import (
    Disk,
    DomainGeometry,
    EulerPoint,
    ExteriorDisk,
    HalfPlane,
    PuncturedDisk,
    ReflectionData,
    Sector,
    UnitDisk,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Generalized Euler angles
#
#   x_1 = r sin(t_{n-1}) ... sin(t_2) sin(t_1)
#   x_2 = r sin(t_{n-1}) ... sin(t_2) cos(t_1)
#   x_j = r sin(t_{n-1}) ... sin(t_j) cos(t_{j-1})      (3 <= j <= n)
#
# with theta[0] = t_1 in [0, 2pi) and theta[j] = t_{j+1} in [0, pi].
# ---------------------------------------------------------------------------

def to_euler(x, n: Optional[int] = None) -> EulerPoint:
    x = np.asarray(x, dtype=float)
    n = x.size if n is None else n
    if n < 2 or x.size != n:
        raise InvalidParameterError(f"point of size {x.size} does not match dimension n={n}")

    r = float(np.linalg.norm(x))
    if r == 0.0:
        return EulerPoint(r=0.0, theta=np.zeros(n - 1), degenerate=True)

    theta = np.empty(n - 1)
    theta[0] = math.atan2(x[0], x[1]) % TWO_PI
    partial = x[0] ** 2 + x[1] ** 2
    for j in range(1, n - 1):
        # t_{j+1} = atan2(|(x_1..x_{j+1})|, x_{j+2})
        theta[j] = math.atan2(math.sqrt(partial), x[j + 1])
        partial += x[j + 1] ** 2
    degenerate = n >= 3 and x[0] == 0.0 and x[1] == 0.0
    return EulerPoint(r=r, theta=theta, degenerate=degenerate)


def from_euler(e: EulerPoint, n: Optional[int] = None) -> np.ndarray:
    theta = np.asarray(e.theta, dtype=float)
    n = theta.size + 1 if n is None else n
    if theta.size != n - 1:
        raise InvalidParameterError(f"{theta.size} angles do not describe a point in dimension {n}")

    x = np.empty(n)
    # sine tail: r * sin(t_{n-1}) ... sin(t_{j})
    tail = e.r
    for j in range(n - 1, 1, -1):
        x[j] = tail * math.cos(theta[j - 1])
        tail *= math.sin(theta[j - 1])
    x[0] = tail * math.sin(theta[0])
    x[1] = tail * math.cos(theta[0])
    return x


def planar_chart(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized (rho, t_1) where rho = r sin(t_{n-1})...sin(t_2) = |(x_1, x_2)|."""
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    t1 = np.mod(np.arctan2(x[..., 0], x[..., 1]), TWO_PI)
    return rho, t1


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

def _center(g, dim: int) -> np.ndarray:
    if isinstance(g, UnitDisk):
        return np.zeros(dim)
    c = getattr(g, "center", None)
    if c is None:
        return np.zeros(dim)
    c = np.asarray(c, dtype=float)
    if c.size != dim:
        raise InvalidParameterError(f"{g.kind} geometry lives in dimension {c.size}, got a point of dimension {dim}")
    return c


def _radius(g) -> float:
    return 1.0 if isinstance(g, UnitDisk) else float(g.radius)


def _check_dimension(g, x: np.ndarray) -> None:
    dim = x.shape[-1]
    if isinstance(g, Sector) and dim != 2:
        raise InvalidParameterError("sector geometry is planar")
    if isinstance(g, (UnitDisk, HalfPlane)) and dim != g.n:
        raise InvalidParameterError(f"{g.kind} geometry has n={g.n}, got a point of dimension {dim}")
    if isinstance(g, PuncturedDisk) and dim != len(g.a):
        raise InvalidParameterError(f"punctured-disk lives in dimension {len(g.a)}, got {dim}")


def tube_radius(g: DomainGeometry) -> float:
    """Half the minimal radius of curvature of the boundary."""
    if isinstance(g, HalfPlane):
        return math.inf
    if isinstance(g, PuncturedDisk):
        return 0.5 * min(g.radius, g.epsilon)
    return 0.5 * _radius(g)


def _sphere_projection(x: np.ndarray, c: np.ndarray, radius: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    y = x - c
    norm = np.linalg.norm(y, axis=-1)
    safe = np.where(norm > 0.0, norm, 1.0)
    nu = y / safe[..., None]
    # the centre projects nowhere in particular; pick the first axis
    nu = np.where((norm > 0.0)[..., None], nu, np.eye(x.shape[-1])[0])
    return c + radius * nu, nu, norm


def _sector_pieces(g: Sector, x: np.ndarray):
    """Candidate nearest points, outward normals and distances for each boundary piece."""
    alpha, radius = g.angle, g.radius
    e0 = np.array([1.0, 0.0])
    ea = np.array([math.cos(alpha), math.sin(alpha)])
    pieces = []
    for direction, normal in ((e0, np.array([0.0, -1.0])), (ea, np.array([-math.sin(alpha), math.cos(alpha)]))):
        t = np.clip(x @ direction, 0.0, radius)
        xi = t[..., None] * direction
        pieces.append((xi, np.broadcast_to(normal, x.shape), np.linalg.norm(x - xi, axis=-1)))

    r = np.linalg.norm(x, axis=-1)
    ang = np.mod(np.arctan2(x[..., 1], x[..., 0]), TWO_PI)
    on_arc = ang <= alpha
    ang_clamped = np.where(on_arc, ang, np.where(ang - alpha < TWO_PI - ang, alpha, 0.0))
    xi = radius * np.stack([np.cos(ang_clamped), np.sin(ang_clamped)], axis=-1)
    nu = xi / radius
    pieces.append((xi, nu, np.linalg.norm(x - xi, axis=-1)))
    inside = (r < radius) & (ang > 0.0) & (ang < alpha)
    return pieces, inside


def _project(g: DomainGeometry, x: np.ndarray):
    """Nearest boundary point, outward unit normal there and signed distance, vectorized over rows."""
    _check_dimension(g, x)
    dim = x.shape[-1]
    if isinstance(g, (UnitDisk, Disk, ExteriorDisk)):
        c, radius = _center(g, dim), _radius(g)
        xi, nu, norm = _sphere_projection(x, c, radius)
        if isinstance(g, ExteriorDisk):
            return xi, -nu, radius - norm
        return xi, nu, norm - radius

    if isinstance(g, HalfPlane):
        xi = x.copy()
        xi[..., -1] = 0.0
        nu = np.zeros_like(x)
        nu[..., -1] = -1.0
        return xi, nu, -x[..., -1]

    if isinstance(g, Sector):
        pieces, inside = _sector_pieces(g, x)
        dists = np.stack([d for _, _, d in pieces], axis=0)
        best = np.argmin(dists, axis=0)
        xi = np.choose(best[..., None], [pc[0] for pc in pieces])
        nu = np.choose(best[..., None], [np.broadcast_to(pc[1], x.shape) for pc in pieces])
        dist = np.min(dists, axis=0)
        return xi, nu, np.where(inside, -dist, dist)

    if isinstance(g, PuncturedDisk):
        c = _center(g, dim)
        a = np.asarray(g.a, dtype=float)
        xi_o, nu_o, norm_o = _sphere_projection(x, c, g.radius)
        xi_i, nu_i, norm_i = _sphere_projection(x, a, g.epsilon)
        sd_o = norm_o - g.radius
        sd_i = g.epsilon - norm_i
        outer = sd_o >= sd_i
        xi = np.where(outer[..., None], xi_o, xi_i)
        nu = np.where(outer[..., None], nu_o, -nu_i)
        return xi, nu, np.maximum(sd_o, sd_i)

    raise InvalidParameterError(f"unsupported geometry {g!r}")


def signed_distance(g: DomainGeometry, x) -> Union[float, np.ndarray]:
    """Negative inside, zero on the boundary, positive outside. Accepts a point or an array of points."""
    x = np.asarray(x, dtype=float)
    _, _, sd = _project(g, np.atleast_2d(x))
    return float(sd[0]) if x.ndim == 1 else sd


def contains(g: DomainGeometry, x) -> Union[bool, np.ndarray]:
    sd = signed_distance(g, x)
    return sd < 0.0


def boundary_projection(g: DomainGeometry, x) -> Tuple[np.ndarray, np.ndarray, float]:
    x = np.asarray(x, dtype=float)
    xi, nu, sd = _project(g, x[None, :])
    return xi[0], nu[0], float(sd[0])


def _corners(g: DomainGeometry) -> np.ndarray:
    if isinstance(g, Sector):
        return np.array([[0.0, 0.0], [g.radius, 0.0], [g.radius * math.cos(g.angle), g.radius * math.sin(g.angle)]])
    if isinstance(g, PuncturedDisk) and len(g.a) == 2:
        c = _center(g, 2)
        a = np.asarray(g.a, dtype=float)
        # the two circles meet at angle +-delta around a, seen from the centre
        delta = 2.0 * math.asin(g.epsilon / (2.0 * g.radius))
        base = math.atan2(a[1] - c[1], a[0] - c[0])
        return np.array([c + g.radius * np.array([math.cos(base + s * delta), math.sin(base + s * delta)]) for s in (-1, 1)])
    return np.empty((0, 2))


def _mirror(g: DomainGeometry, x: np.ndarray) -> np.ndarray:
    xi, _, _ = _project(g, x[None, :])
    return 2.0 * xi[0] - x


def reflection_jacobian(g: DomainGeometry, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    dim = x.size
    if isinstance(g, (UnitDisk, Disk, ExteriorDisk)):
        radius = _radius(g)
        y = x - _center(g, dim)
        norm = float(np.linalg.norm(y))
        return (2.0 * radius / norm - 1.0) * np.eye(dim) - 2.0 * radius * np.outer(y, y) / norm ** 3
    if isinstance(g, HalfPlane):
        jac = np.eye(dim)
        jac[-1, -1] = -1.0
        return jac
    return numerical_reflection_jacobian(g, x)


def numerical_reflection_jacobian(g: DomainGeometry, x, step: Optional[float] = None) -> np.ndarray:
    """Central differences of the mirror map, column by column."""
    step = settings.JACOBIAN_STEP if step is None else step
    x = np.asarray(x, dtype=float)
    jac = np.empty((x.size, x.size))
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = step
        jac[:, j] = (_mirror(g, x + e) - _mirror(g, x - e)) / (2.0 * step)
    return jac


def reflect(g: DomainGeometry, x) -> ReflectionData:
    x = np.asarray(x, dtype=float)
    xi, nu, sd = boundary_projection(g, x)
    beta0 = tube_radius(g)
    if abs(sd) > beta0:
        raise OutOfTubeError(f"|signed distance| = {abs(sd):.6g} exceeds the tube radius {beta0:.6g} of {g.kind}")
    corners = _corners(g)
    if corners.size and np.min(np.linalg.norm(corners - xi, axis=1)) < settings.SECTOR_CORNER_CAP:
        raise OutOfTubeError(f"projection {xi} lies in a corner cap of {g.kind}")

    image = 2.0 * xi - x
    jac = reflection_jacobian(g, x)
    logger.debug(f"reflect {g.kind}: x={x}, xi={xi}, sd={sd:.3e}")
    return ReflectionData(projection=xi, normal=nu, signed_distance=sd, image=image, jacobian=jac)

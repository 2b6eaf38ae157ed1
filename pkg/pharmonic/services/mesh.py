import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.spatial import Delaunay, cKDTree

from pharmonic.core.config import settings
from pharmonic.core.exceptions import LocationError, MeshGenerationError
from pharmonic.schemas import BoundaryEdge, Disk, MeshDescriptor, PuncturedDisk, Sector
from pharmonic.services import geometry

logger = logging.getLogger(__name__)

AREA_FLOOR = 1e-14
DUPLICATE_TOL = 1e-12


class Mesh2D:
    """Planar triangulation: vertices (V, 2), positively oriented triangles (T, 3),
    and tagged boundary edges (B, 2)."""

    def __init__(self, vertices: np.ndarray, triangles: np.ndarray, boundary_edges: np.ndarray,
                 boundary_tags: Sequence[str]):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.boundary_edges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = list(boundary_tags)
        self._locator: Optional["TriangleLocator"] = None

    def __repr__(self) -> str:
        return f"Mesh2D({len(self.vertices)} vertices, {len(self.triangles)} triangles)"

    @property
    def areas(self) -> np.ndarray:
        p0, p1, p2 = (self.vertices[self.triangles[:, i]] for i in range(3))
        d1, d2 = p1 - p0, p2 - p0
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_nodes(self, tag: Optional[str] = None) -> np.ndarray:
        edges = self.boundary_edges
        if tag is not None:
            mask = np.array([t == tag for t in self.boundary_tags], dtype=bool)
            edges = edges[mask] if mask.size else edges[:0]
        return np.unique(edges)

    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(len(self.vertices), dtype=bool)
        mask[self.boundary_nodes()] = False
        return np.flatnonzero(mask)

    @property
    def tags(self) -> List[str]:
        return sorted(set(self.boundary_tags))

    def locator(self) -> "TriangleLocator":
        if self._locator is None:
            self._locator = TriangleLocator(self)
        return self._locator

    def to_descriptor(self) -> MeshDescriptor:
        return MeshDescriptor(
            vertices=self.vertices.tolist(),
            triangles=self.triangles.tolist(),
            boundary=[BoundaryEdge(edge=list(map(int, e)), tag=t) for e, t in zip(self.boundary_edges, self.boundary_tags)],
        )

    @classmethod
    def from_descriptor(cls, descriptor: MeshDescriptor) -> "Mesh2D":
        edges = np.array([b.edge for b in descriptor.boundary], dtype=np.int64).reshape(-1, 2)
        return cls(np.array(descriptor.vertices), np.array(descriptor.triangles), edges,
                   [b.tag for b in descriptor.boundary])


def check_mesh(mesh: Mesh2D) -> None:
    """Raise MeshGenerationError unless the mesh invariants hold."""
    if np.any(mesh.areas <= 0.0):
        raise MeshGenerationError("mesh has non-positively oriented triangles")
    pairs = cKDTree(mesh.vertices).query_pairs(DUPLICATE_TOL)
    if pairs:
        raise MeshGenerationError(f"mesh has {len(pairs)} duplicate vertex pairs")
    used = np.zeros(len(mesh.vertices), dtype=bool)
    used[mesh.triangles.ravel()] = True
    if not used.all():
        raise MeshGenerationError(f"{int((~used).sum())} vertices belong to no triangle")
    counts = _edge_counts(mesh.triangles)
    for edge in mesh.boundary_edges:
        if counts.get((min(edge), max(edge)), 0) != 1:
            raise MeshGenerationError(f"boundary edge {edge.tolist()} is not on exactly one triangle")


def _edge_counts(triangles: np.ndarray) -> Dict[Tuple[int, int], int]:
    counts: Dict[Tuple[int, int], int] = {}
    for tri in triangles:
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return counts


def mesh_statistics(mesh: Mesh2D) -> Dict[str, float]:
    tri = mesh.vertices[mesh.triangles]
    edges = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]], axis=1)
    lengths = np.linalg.norm(edges, axis=2)
    angles = []
    for i in range(3):
        u, v = -edges[:, (i + 2) % 3], edges[:, i]
        cos = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
    return {
        "vertices": float(len(mesh.vertices)),
        "triangles": float(len(mesh.triangles)),
        "boundary_edges": float(len(mesh.boundary_edges)),
        "h_max": float(lengths.max()),
        "h_min": float(lengths.min()),
        "min_angle_deg": float(np.min(angles)),
        "area": float(mesh.areas.sum()),
    }


# ---------------------------------------------------------------------------
# Node placement
# ---------------------------------------------------------------------------

def _size_function(h: float, focus: Optional[np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    if focus is None:
        return lambda x: np.full(np.atleast_2d(x).shape[0], h)
    grading = settings.MESH_GRADING
    floor = h / settings.MESH_MIN_FACTOR
    return lambda x: np.clip(grading * np.linalg.norm(np.atleast_2d(x) - focus, axis=1), floor, h)


def _curve_nodes(curve: Callable[[np.ndarray], np.ndarray], t0: float, t1: float, size, closed: bool) -> np.ndarray:
    """Nodes on a parametrized curve, equidistributed in the metric 1/size. Endpoints kept unless closed."""
    fine = np.linspace(t0, t1, 4097)
    pts = curve(fine)
    speed = np.linalg.norm(np.gradient(pts, fine, axis=0), axis=1)
    density = speed / size(pts)
    cumulative = cumulative_trapezoid(density, fine, initial=0.0)
    segments = max(3 if closed else 1, int(math.ceil(cumulative[-1])))
    targets = np.linspace(0.0, cumulative[-1], segments + 1)
    params = np.interp(targets, cumulative, fine)
    if closed:
        params = params[:-1]
    return curve(params)


def _circle(center: np.ndarray, radius: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: center + radius * np.stack([np.cos(t), np.sin(t)], axis=-1)


def _segment(start: np.ndarray, end: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    return lambda t: start + np.asarray(t)[..., None] * (end - start)


def _lattice_nodes(g, anchor: np.ndarray, extent: float, h: float, size, focus: Optional[np.ndarray]) -> np.ndarray:
    """Nested hexagonal lattices anchored at `anchor`: a lattice point of spacing h/2^l is kept where the
    size function asks for level l and the point sits clear of the boundary."""
    levels = int(round(math.log2(settings.MESH_MIN_FACTOR))) if focus is not None else 0
    grading = settings.MESH_GRADING
    kept = []
    for level in range(levels + 1):
        spacing = h / 2 ** level
        reach = extent if level == 0 else min(extent, h * 2.0 ** (0.5 - level) / grading + h)
        jmax = int(math.ceil(reach / (spacing * math.sqrt(3.0) / 2.0))) + 1
        imax = int(math.ceil(reach / spacing)) + jmax
        i, j = np.meshgrid(np.arange(-imax, imax + 1), np.arange(-jmax, jmax + 1), indexing="ij")
        pts = anchor + spacing * np.stack([i.ravel() + 0.5 * j.ravel(), (math.sqrt(3.0) / 2.0) * j.ravel()], axis=1)
        pts = pts[np.max(np.abs(pts - anchor), axis=1) <= reach]
        if pts.size == 0:
            continue
        local = size(pts)
        wanted = np.clip(np.rint(np.log2(h / local)), 0, levels).astype(int)
        clearance = -geometry.signed_distance(g, pts)
        keep = (wanted == level) & (clearance >= 0.6 * local)
        kept.append(pts[keep])
    return np.concatenate(kept) if kept else np.empty((0, 2))


def _triangulate(g, boundary_pts: np.ndarray, boundary_tags: List[set], interior_pts: np.ndarray) -> Mesh2D:
    vertices = np.concatenate([boundary_pts, interior_pts])
    tri = Delaunay(vertices).simplices.astype(np.int64)

    corners = vertices[tri]
    d1, d2 = corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    flip = area < 0.0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    centroids = corners.mean(axis=1)
    keep = (geometry.signed_distance(g, centroids) < 0.0) & (np.abs(area) > AREA_FLOOR)
    tri = tri[keep]

    counts = _edge_counts(tri)
    n_boundary = len(boundary_pts)
    edges, tags = [], []
    for (a, b), count in sorted(counts.items()):
        if count != 1:
            continue
        if a >= n_boundary or b >= n_boundary:
            raise MeshGenerationError(f"triangulation does not conform to the boundary near {vertices[a].tolist()}")
        common = boundary_tags[a] & boundary_tags[b]
        if not common:
            raise MeshGenerationError(f"boundary edge ({a}, {b}) joins two different boundary pieces")
        edges.append((a, b))
        tags.append(sorted(common)[0])

    mesh = Mesh2D(vertices, tri, np.array(edges, dtype=np.int64), tags)
    check_mesh(mesh)
    logger.info(f"Meshed {g.kind}: {len(vertices)} vertices, {len(tri)} triangles, {len(edges)} boundary edges")
    return mesh


def mesh_disk(radius: float = 1.0, a=None, epsilon: Optional[float] = None, h: float = 0.1,
              center=(0.0, 0.0)) -> Mesh2D:
    """Disk, optionally graded toward the boundary point a and punctured by B_epsilon(a)."""
    c = np.asarray(center, dtype=float)
    if not (radius > 0.0 and h > 0.0) or h > radius:
        raise MeshGenerationError(f"infeasible disk mesh parameters radius={radius}, h={h}")
    focus = None if a is None else np.asarray(a, dtype=float)
    if focus is not None and abs(np.linalg.norm(focus - c) - radius) > 1e-9 * max(1.0, radius):
        raise MeshGenerationError(f"a={focus.tolist()} is not on the circle of radius {radius}")
    size = _size_function(h, focus)

    if epsilon is None:
        g = Disk(center=c.tolist(), radius=radius)
        start = 0.0 if focus is None else math.atan2(focus[1] - c[1], focus[0] - c[0])
        outer = _curve_nodes(_circle(c, radius), start, start + 2.0 * math.pi, size, closed=True)
        tags = [{"outer"} for _ in outer]
        interior = _lattice_nodes(g, c if focus is None else focus, 2.0 * radius, h, size, focus)
        return _triangulate(g, outer, tags, interior)

    if focus is None:
        raise MeshGenerationError("a punctured disk needs the boundary point a")
    if not 0.0 < epsilon < radius:
        raise MeshGenerationError(f"epsilon={epsilon} must lie in (0, {radius})")
    g = PuncturedDisk(a=focus.tolist(), epsilon=epsilon, center=c.tolist(), radius=radius)

    base = math.atan2(focus[1] - c[1], focus[0] - c[0])
    delta = 2.0 * math.asin(epsilon / (2.0 * radius))
    outer = _curve_nodes(_circle(c, radius), base + delta, base + 2.0 * math.pi - delta, size, closed=False)
    # inner arc: the part of |x - a| = epsilon inside the disk, through the point toward the centre
    start_corner, end_corner = outer[-1], outer[0]
    phi0 = math.atan2(start_corner[1] - focus[1], start_corner[0] - focus[0])
    phi1 = math.atan2(end_corner[1] - focus[1], end_corner[0] - focus[0])
    inward = math.atan2(c[1] - focus[1], c[0] - focus[0])
    phi0 = inward + (phi0 - inward + math.pi) % (2.0 * math.pi) - math.pi
    phi1 = inward + (phi1 - inward + math.pi) % (2.0 * math.pi) - math.pi
    lo, hi = min(phi0, phi1), max(phi0, phi1)
    inner = _curve_nodes(_circle(focus, epsilon), lo, hi, size, closed=False)[1:-1]

    # the two corners belong to both pieces
    boundary = np.concatenate([outer, inner])
    tags = [{"outer"} for _ in outer] + [{"inner-arc"} for _ in inner]
    tags[0] = tags[0] | {"inner-arc"}
    tags[len(outer) - 1] = tags[len(outer) - 1] | {"inner-arc"}
    interior = _lattice_nodes(g, focus, 2.0 * radius, h, size, focus)
    return _triangulate(g, boundary, tags, interior)


def mesh_sector(angle: float, radius: float = 1.0, h: float = 0.1) -> Mesh2D:
    """Sector {0 < theta < angle, r < radius} with boundary tags ray-start, arc, ray-end."""
    if not (0.0 < angle < 2.0 * math.pi) or not (0.0 < h < radius):
        raise MeshGenerationError(f"infeasible sector mesh parameters angle={angle}, radius={radius}, h={h}")
    g = Sector(angle=angle, radius=radius)
    size = _size_function(h, None)
    origin = np.zeros(2)
    start = np.array([radius, 0.0])
    end = radius * np.array([math.cos(angle), math.sin(angle)])

    ray0 = _curve_nodes(_segment(origin, start), 0.0, 1.0, size, closed=False)
    arc = _curve_nodes(_circle(origin, radius), 0.0, angle, size, closed=False)
    ray1 = _curve_nodes(_segment(end, origin), 0.0, 1.0, size, closed=False)
    arc[0], arc[-1] = start, end

    boundary = np.concatenate([ray0, arc[1:], ray1[1:-1]])
    tags = ([{"ray-start"} for _ in ray0] + [{"arc"} for _ in arc[1:]] + [{"ray-end"} for _ in ray1[1:-1]])
    tags[0] = tags[0] | {"ray-end"}
    tags[len(ray0) - 1] = tags[len(ray0) - 1] | {"arc"}
    tags[len(ray0) + len(arc) - 2] = tags[len(ray0) + len(arc) - 2] | {"ray-end"}
    interior = _lattice_nodes(g, origin, radius, h, size, None)
    return _triangulate(g, boundary, tags, interior)


# ---------------------------------------------------------------------------
# Point location
# ---------------------------------------------------------------------------

class TriangleLocator:
    """Walking point location with a brute-force fallback. Points on shared edges go to the lowest triangle index."""

    def __init__(self, mesh: Mesh2D, tol: float = 1e-12):
        self.mesh = mesh
        self.tol = tol
        p0 = mesh.vertices[mesh.triangles[:, 0]]
        basis = np.stack([mesh.vertices[mesh.triangles[:, 1]] - p0, mesh.vertices[mesh.triangles[:, 2]] - p0], axis=2)
        self.origin = p0
        self.inverse = np.linalg.inv(basis)
        self.neighbors = self._neighbors(mesh.triangles)
        self._last = 0

    @staticmethod
    def _neighbors(triangles: np.ndarray) -> np.ndarray:
        owner: Dict[Tuple[int, int], Tuple[int, int]] = {}
        neighbors = -np.ones((len(triangles), 3), dtype=np.int64)
        for t, tri in enumerate(triangles):
            # edge opposite local vertex i
            for i in range(3):
                a, b = int(tri[(i + 1) % 3]), int(tri[(i + 2) % 3])
                key = (min(a, b), max(a, b))
                if key in owner:
                    s, j = owner[key]
                    neighbors[t, i] = s
                    neighbors[s, j] = t
                else:
                    owner[key] = (t, i)
        return neighbors

    def barycentric(self, t: int, x: np.ndarray) -> np.ndarray:
        xi = self.inverse[t] @ (x - self.origin[t])
        return np.array([1.0 - xi[0] - xi[1], xi[0], xi[1]])

    def _brute_force(self, x: np.ndarray) -> int:
        xi = np.einsum("tij,tj->ti", self.inverse, x - self.origin)
        bary = np.column_stack([1.0 - xi[:, 0] - xi[:, 1], xi])
        inside = np.flatnonzero(np.all(bary >= -self.tol, axis=1))
        if inside.size == 0:
            raise LocationError(f"point {x.tolist()} is outside the mesh")
        return int(inside[0])

    def locate(self, x) -> Tuple[int, np.ndarray]:
        x = np.asarray(x, dtype=float)
        t = self._last
        for _ in range(len(self.mesh.triangles)):
            bary = self.barycentric(t, x)
            worst = int(np.argmin(bary))
            if bary[worst] >= -self.tol:
                if bary.min() <= self.tol:
                    # on an edge or vertex: several triangles qualify
                    t = self._brute_force(x)
                    bary = self.barycentric(t, x)
                self._last = t
                return t, bary
            nxt = int(self.neighbors[t, worst])
            if nxt < 0:
                break
            t = nxt
        logger.debug(f"walk failed for {x.tolist()}, falling back to brute force")
        t = self._brute_force(x)
        self._last = t
        return t, self.barycentric(t, x)

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape
from matplotlib import colormaps
from matplotlib.colors import to_hex
from matplotlib.figure import Figure
from matplotlib.path import Path as MplPath
from matplotlib.tri import Triangulation

from pharmonic.core.config import settings
from pharmonic.core.exceptions import InvalidParameterError
from pharmonic.services import geometry
from pharmonic.services.fields import ScalarField
from pharmonic.services.mesh import Mesh2D

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"
templates = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), autoescape=select_autoescape(["svg", "j2"]),
                        keep_trailing_newline=True)

Window = Tuple[float, float, float, float]
CANVAS = 480
UPPER_PERCENTILE = 95.0
SINGULAR_MASK = 1e-9


def contour_levels(values: np.ndarray, count: Optional[int] = None) -> Optional[np.ndarray]:
    """Equally spaced levels from the minimum to the 95th percentile; None for a constant field."""
    count = settings.RENDER_LEVELS if count is None else count
    finite = np.asarray(values, dtype=float)
    finite = finite[np.isfinite(finite)]
    if finite.size == 0:
        raise InvalidParameterError("nothing to render: no finite values in the window")
    lo, hi = float(finite.min()), float(np.percentile(finite, UPPER_PERCENTILE))
    if hi - lo <= 1e-12 * max(1.0, abs(lo)):
        hi = float(finite.max())
    if hi - lo <= 1e-12 * max(1.0, abs(lo)):
        return None
    return np.linspace(lo, hi, count + 1)


def sample_field(u: ScalarField, window: Window, resolution: int = 201, g=None
                 ) -> Tuple[np.ndarray, np.ndarray, np.ma.MaskedArray]:
    if u.n != 2:
        raise InvalidParameterError(f"only planar fields can be rendered, got n={u.n}")
    xmin, xmax, ymin, ymax = window
    if not (xmax > xmin and ymax > ymin):
        raise InvalidParameterError(f"empty window {window}")
    xs = np.linspace(xmin, xmax, resolution)
    ys = np.linspace(ymin, ymax, resolution)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    keep = np.ones(len(pts), dtype=bool)
    for s in u.singular_points:
        keep &= np.linalg.norm(pts - s, axis=1) > SINGULAR_MASK
    if g is not None:
        keep &= np.asarray(geometry.signed_distance(g, pts)) <= 0.0
    Z = np.full(len(pts), np.nan)
    if keep.any():
        Z[keep] = u.value(pts[keep])
    return X, Y, np.ma.masked_invalid(Z.reshape(X.shape))


def _to_pixels(points: np.ndarray, window: Window, width: int, height: int) -> np.ndarray:
    xmin, xmax, ymin, ymax = window
    px = (points[:, 0] - xmin) / (xmax - xmin) * width
    py = (ymax - points[:, 1]) / (ymax - ymin) * height
    return np.column_stack([px, py])


def path_data(path: MplPath, window: Window, width: int, height: int) -> str:
    parts: List[str] = []
    for vertices, code in path.iter_segments(simplify=False, curves=False):
        if code == MplPath.CLOSEPOLY:
            parts.append("Z")
            continue
        x, y = _to_pixels(np.asarray(vertices, dtype=float).reshape(1, 2), window, width, height)[0]
        parts.append(f"{'M' if code == MplPath.MOVETO else 'L'}{x:.2f},{y:.2f}")
    return "".join(parts)


def _palette(count: int) -> List[str]:
    cmap = colormaps["viridis"]
    if count == 1:
        return [to_hex(cmap(0.0))]
    return [to_hex(cmap(i / (count - 1))) for i in range(count)]


def _bands(contour_set, levels: np.ndarray, window: Window, width: int, height: int) -> List[Dict[str, Any]]:
    paths = contour_set.get_paths()
    colors = _palette(len(paths))
    # the last band collects everything above the top level
    labels = [f"{lo:.6g}" for lo in levels[:len(paths)]]
    return [{"d": path_data(path, window, width, height), "color": color, "level": label}
            for path, color, label in zip(paths, colors, labels) if len(path.vertices)]


def _constant_band(value: float, width: int, height: int) -> List[Dict[str, Any]]:
    return [{"d": f"M0,0L{width},0L{width},{height}L0,{height}Z", "color": _palette(1)[0], "level": f"{value:.6g}"}]


def render_svg(bands: List[Dict[str, Any]], meta: Dict[str, Any], window: Window, title: str = "",
               markers: Sequence = (), width: int = CANVAS, height: Optional[int] = None) -> str:
    height = height or int(round(width * (window[3] - window[2]) / (window[1] - window[0])))
    marker_px = [{"x": f"{x:.2f}", "y": f"{y:.2f}"}
                 for x, y in _to_pixels(np.asarray(markers, dtype=float).reshape(-1, 2), window, width, height)]
    template = templates.get_template("contours.svg.j2")
    return template.render(meta_json=json.dumps(meta, sort_keys=True), width=width, height=height, title=title,
                           bands=bands, markers=marker_px)


def render_field(u: ScalarField, window: Window, meta: Dict[str, Any], resolution: int = 201, g=None,
                 levels: Optional[int] = None) -> str:
    X, Y, Z = sample_field(u, window, resolution, g)
    width = CANVAS
    height = int(round(width * (window[3] - window[2]) / (window[1] - window[0])))
    scale = contour_levels(Z.compressed(), levels)
    if scale is None:
        logger.info(f"{u.description} is constant on the window; rendering a single band")
        bands = _constant_band(float(Z.compressed()[0]), width, height)
    else:
        fig = Figure()
        ax = fig.add_subplot()
        cs = ax.contourf(X, Y, Z, levels=scale, extend="max")
        bands = _bands(cs, scale, window, width, height)
    markers = [s for s in u.singular_points if s.size == 2]
    logger.info(f"Rendered {u.description}: {len(bands)} bands")
    return render_svg(bands, meta, window, title=u.description, markers=markers, width=width, height=height)


def render_solution(mesh: Mesh2D, values, meta: Dict[str, Any], window: Optional[Window] = None,
                    levels: Optional[int] = None, title: str = "discrete solution") -> str:
    values = np.asarray(values, dtype=float)
    if values.shape != (len(mesh.vertices),):
        raise InvalidParameterError(f"expected {len(mesh.vertices)} nodal values, got {values.shape}")
    if window is None:
        lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
        window = (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))
    width = CANVAS
    height = int(round(width * (window[3] - window[2]) / (window[1] - window[0])))
    scale = contour_levels(values, levels)
    if scale is None:
        bands = _constant_band(float(values[0]), width, height)
    else:
        tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
        fig = Figure()
        ax = fig.add_subplot()
        cs = ax.tricontourf(tri, values, levels=scale, extend="max")
        bands = _bands(cs, scale, window, width, height)
    return render_svg(bands, meta, window, title=title, width=width, height=height)

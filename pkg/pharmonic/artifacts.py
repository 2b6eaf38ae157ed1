"""File persistence: every artifact carries the run's meta header so two identical runs write identical bytes."""
import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np
from pydantic import BaseModel

from pharmonic import __version__
from pharmonic.core.exceptions import InvalidParameterError
from pharmonic.schemas import MeshDescriptor, RunConfig, SolverLogEntry
from pharmonic.services.mesh import Mesh2D
from pharmonic.services.spectral import SpectralPair

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def config_hash(run: RunConfig) -> str:
    canonical = json.dumps(run.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def meta_header(run: RunConfig) -> Dict[str, Any]:
    return {"version": __version__, "config_hash": config_hash(run), "seed": run.seed, "command": run.command}


def format_value(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def to_jsonable(payload: Any) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump(mode="json", by_alias=True)
    if isinstance(payload, dict):
        return {str(k): to_jsonable(v) for k, v in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [to_jsonable(v) for v in payload]
    if isinstance(payload, np.ndarray):
        return payload.tolist()
    if isinstance(payload, np.generic):
        return payload.item()
    return payload


def dumps(payload: Any, run: RunConfig) -> str:
    body = {"meta": meta_header(run)}
    body.update(to_jsonable(payload) if isinstance(payload, (dict, BaseModel)) else {"result": to_jsonable(payload)})
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: PathLike, payload: Any, run: RunConfig) -> Path:
    path = _prepare(path)
    path.write_text(dumps(payload, run), encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise InvalidParameterError(f"no such file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"{path} is not valid JSON: {exc}") from exc


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]], run: RunConfig) -> Path:
    path = _prepare(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write("# " + json.dumps(meta_header(run), sort_keys=True) + "\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.info(f"Wrote {path}")
    return path


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise InvalidParameterError(f"no such file: {path}")
    with path.open(encoding="utf-8", newline="") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return list(csv.DictReader(lines))


def write_text(path: PathLike, text: str) -> Path:
    path = _prepare(path)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


# Domain artifacts

def write_mesh(path: PathLike, mesh: Mesh2D, run: RunConfig) -> Path:
    return write_json(path, mesh.to_descriptor(), run)


def read_mesh(path: PathLike) -> Mesh2D:
    data = read_json(path)
    data.pop("meta", None)
    return Mesh2D.from_descriptor(MeshDescriptor.model_validate(data))


def write_solution(path: PathLike, mesh: Mesh2D, values, run: RunConfig) -> Path:
    values = np.asarray(values, dtype=float)
    rows = ((i, x, y, v) for i, ((x, y), v) in enumerate(zip(mesh.vertices, values)))
    return write_csv(path, ["node", "x", "y", "value"], rows, run)


def read_solution(path: PathLike) -> np.ndarray:
    rows = read_csv(path)
    try:
        ordered = sorted(rows, key=lambda r: int(r["node"]))
        return np.array([float(r["value"]) for r in ordered])
    except (KeyError, ValueError) as exc:
        raise InvalidParameterError(f"{path} is not a node,x,y,value solution file") from exc


def write_solver_log(path: PathLike, log: Sequence[SolverLogEntry], run: RunConfig) -> Path:
    return write_json(path, {"log": list(log)}, run)


def write_profile(path: PathLike, pair: SpectralPair, run: RunConfig) -> Path:
    profile = pair.profile
    rows = zip(profile.grid, profile.omega, profile.omega_prime, profile.omega_second)
    return write_csv(path, ["theta", "omega", "omega_prime", "omega_second"], rows, run)

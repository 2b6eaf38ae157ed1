import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import TypeAdapter

from pharmonic import artifacts
from pharmonic.core.exceptions import InvalidParameterError
from pharmonic.schemas import DomainGeometry, FieldSpec, RunConfig

logger = logging.getLogger(__name__)

# flags that shape where and how results go, not what they are; kept out of the config hash
GLOBAL_KEYS = ("out", "seed", "json_output", "config", "log_level", "handler", "command", "command_parsers")

geometry_adapter = TypeAdapter(DomainGeometry)
field_adapter = TypeAdapter(FieldSpec)


class RunContext:
    def __init__(self, run: RunConfig, out: Path, json_output: bool = False):
        self.run = run
        self.out = out
        self.json_output = json_output

    def path(self, name: str) -> Path:
        return self.out / name

    def emit(self, payload: Any, name: Optional[str] = None) -> Path:
        """Write the command's summary JSON and echo it on stdout with --json."""
        target = artifacts.write_json(self.path(name or f"{self.run.command}.json"), payload, self.run)
        if self.json_output:
            sys.stdout.write(artifacts.dumps(payload, self.run))
        return target


def run_config(command: str, args, seed: int) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k not in GLOBAL_KEYS}
    return RunConfig(command=command, params=params, seed=seed)


def parse_int_range(text: str) -> List[int]:
    """'3' -> [3]; '1..4' -> [1, 2, 3, 4]; '1,3,5' -> [1, 3, 5]."""
    try:
        if ".." in text:
            lo, hi = (int(s) for s in text.split("..", 1))
            if hi < lo:
                raise InvalidParameterError(f"empty range {text}")
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise InvalidParameterError(f"cannot parse integer range {text!r}") from exc


def parse_floats(text: str) -> List[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise InvalidParameterError(f"cannot parse a list of numbers from {text!r}") from exc


def _json_source(text: str) -> Any:
    """Inline JSON, or @path to a JSON file."""
    if text.startswith("@"):
        data = artifacts.read_json(text[1:])
        data.pop("meta", None)
        return data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidParameterError(f"not valid JSON: {text!r}") from exc


def load_geometry(text: str):
    return geometry_adapter.validate_python(_json_source(text))


def load_field_spec(text: str):
    return field_adapter.validate_python(_json_source(text))


def load_config_file(path: str) -> Dict[str, Any]:
    data = artifacts.read_json(path)
    data.pop("meta", None)
    if "params" in data:
        extra = set(data) - {"command", "params", "seed"}
        if extra:
            raise InvalidParameterError(f"unknown config keys: {sorted(extra)}")
        return dict(data["params"])
    return data


def require(args, *names: str) -> None:
    """Options that may come from --config instead of the command line."""
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name, None) is None]
    if missing:
        raise InvalidParameterError(f"{args.command} needs {', '.join(missing)}")

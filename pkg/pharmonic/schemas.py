import math
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PlainSerializer, PlainValidator, field_validator, model_validator


def _as_vector(value: Any) -> np.ndarray:
    return np.array(value, dtype=float)


# numpy arrays travel through pydantic models and come out as nested lists in JSON
Vector = Annotated[
    np.ndarray,
    PlainValidator(_as_vector),
    PlainSerializer(lambda a: np.asarray(a, dtype=float).tolist(), return_type=list),
]


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class Params(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float = Field(..., gt=1.0, examples=[3.0])
    n: int = Field(..., ge=2, examples=[3])


class EulerPoint(ArrayModel):
    r: float = Field(..., ge=0.0)
    theta: Vector
    degenerate: bool = False

    @field_validator("theta")
    @classmethod
    def check_ranges(cls, theta: np.ndarray) -> np.ndarray:
        if theta.ndim != 1 or theta.size < 1:
            raise ValueError("theta must hold n-1 angles")
        if not (0.0 <= theta[0] < 2.0 * math.pi + 1e-12):
            raise ValueError(f"theta[0]={theta[0]} outside [0, 2pi)")
        if np.any(theta[1:] < -1e-12) or np.any(theta[1:] > math.pi + 1e-12):
            raise ValueError("theta[j] for j >= 1 must lie in [0, pi]")
        return theta


# Domain geometries. Every descriptor is tagged by `kind` so JSON like
# {"kind": "disk", "center": [0, 0], "radius": 1.0} parses to the right model.

class UnitDisk(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["unit-disk"] = "unit-disk"
    n: int = Field(2, ge=2)


class Disk(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["disk"] = "disk"
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0], min_length=2)
    radius: float = Field(1.0, gt=0.0)


class ExteriorDisk(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["exterior-disk"] = "exterior-disk"
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0], min_length=2)
    radius: float = Field(1.0, gt=0.0)


class HalfPlane(BaseModel):
    """The half space {x_n > 0}."""
    model_config = ConfigDict(frozen=True)
    kind: Literal["half-plane"] = "half-plane"
    n: int = Field(2, ge=2)


class Sector(BaseModel):
    """Circular sector {0 < theta < angle, |x| < radius} with its apex at the origin."""
    model_config = ConfigDict(frozen=True)
    kind: Literal["sector"] = "sector"
    angle: float = Field(..., gt=0.0, lt=2.0 * math.pi)
    radius: float = Field(1.0, gt=0.0)


class PuncturedDisk(BaseModel):
    """Disk with the ball B_epsilon(a) around the boundary point a removed."""
    model_config = ConfigDict(frozen=True)
    kind: Literal["punctured-disk"] = "punctured-disk"
    a: List[float] = Field(..., min_length=2)
    epsilon: float = Field(..., gt=0.0)
    center: Optional[List[float]] = None
    radius: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def check_puncture(self) -> "PuncturedDisk":
        center = self.center if self.center is not None else [0.0] * len(self.a)
        if len(center) != len(self.a):
            raise ValueError("center and a must have the same dimension")
        dist = math.dist(center, self.a)
        if abs(dist - self.radius) > 1e-9 * max(1.0, self.radius):
            raise ValueError(f"a must lie on the boundary circle (|a - c| = {dist}, radius {self.radius})")
        if self.epsilon >= self.radius:
            raise ValueError("epsilon must be smaller than the radius")
        return self


DomainGeometry = Annotated[
    Union[UnitDisk, Disk, ExteriorDisk, HalfPlane, Sector, PuncturedDisk],
    Field(discriminator="kind"),
]


class ReflectionData(ArrayModel):
    projection: Vector
    normal: Vector
    signed_distance: float
    image: Vector
    jacobian: Vector


# Field descriptors, used for CLI round trips and `fields.build_field`.

class CoordinateSpec(BaseModel):
    kind: Literal["coordinate"] = "coordinate"
    i: int = Field(..., ge=1)
    n: int = Field(..., ge=2)
    p: float = Field(2.0, gt=1.0)


class ChiSpec(BaseModel):
    kind: Literal["chi"] = "chi"
    i: int = Field(..., ge=1)
    n: int = Field(..., ge=2)


class BallSpec(BaseModel):
    kind: Literal["ball-interior", "ball-exterior"]
    n: int = Field(..., ge=2)
    a: List[float]
    center: Optional[List[float]] = None
    radius: float = Field(1.0, gt=0.0)


class SeparableSpec(BaseModel):
    kind: Literal["separable", "separable-singular"]
    p: float = Field(..., gt=1.0)
    k: int = Field(..., ge=1)
    n: int = Field(2, ge=2)
    resolution: Optional[int] = Field(None, ge=64)


class RadialPowerSpec(BaseModel):
    kind: Literal["radial-power"] = "radial-power"
    n: int = Field(..., ge=2)
    exponent: float = 2.0


class FundamentalRadialSpec(BaseModel):
    kind: Literal["fundamental-radial"] = "fundamental-radial"
    n: int = Field(..., ge=2)
    p: float = Field(..., gt=1.0)


class PuncturedDiskSpec(BaseModel):
    kind: Literal["punctured-disk"] = "punctured-disk"
    a: List[float] = Field(..., min_length=2, max_length=2)
    epsilon: float = Field(..., gt=0.0, lt=1.0)


class InvertedSpec(BaseModel):
    kind: Literal["inverted"] = "inverted"
    base: "FieldSpec"
    center: List[float]
    power: float = Field(1.0, gt=0.0)


class ScaledSpec(BaseModel):
    kind: Literal["scaled"] = "scaled"
    base: "FieldSpec"
    factor: float


class ExtendedSpec(BaseModel):
    kind: Literal["extended"] = "extended"
    base: "FieldSpec"
    geometry: DomainGeometry


FieldSpec = Annotated[
    Union[
        CoordinateSpec, ChiSpec, BallSpec, SeparableSpec, RadialPowerSpec, FundamentalRadialSpec,
        PuncturedDiskSpec, InvertedSpec, ScaledSpec, ExtendedSpec,
    ],
    Field(discriminator="kind"),
]

InvertedSpec.model_rebuild()
ScaledSpec.model_rebuild()
ExtendedSpec.model_rebuild()


# Reports. They are plain value objects: building one never raises on a failed check.

class SpectralSummary(BaseModel):
    p: float
    k: int
    beta: float
    lambda2: float
    antiperiod: float
    residuals: Dict[str, float] = Field(default_factory=dict)


class ResidualReport(ArrayModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, populate_by_name=True)

    point: Vector
    h: float
    residual: float
    gradient_norm: float
    normalized: float
    passed: bool = Field(..., serialization_alias="pass")


class BoundaryLimitReport(ArrayModel):
    a: Vector
    normal: Vector
    directions: Vector
    estimates: Vector
    expected: Vector
    max_error: float


class BlowupReport(BaseModel):
    radii: List[float]
    errors: List[float]
    order: Optional[float] = None


class GrowthBoundsReport(BaseModel):
    n_samples: int
    n_skipped: int = 0
    lower_violations: int
    upper_violations: int
    fitted_c: float
    passed: bool


class EllipticityReport(BaseModel):
    lower_gamma: float
    upper_gamma: float
    n_samples: int
    passed: bool


class ReflectionCheckReport(BaseModel):
    p: float
    n_points: int
    zero_error: float
    boundary_error: float
    threshold: float
    near: EllipticityReport
    tube: EllipticityReport
    passed: bool


class RatioReport(BaseModel):
    mean_ratio: float
    max_deviation: float
    n_used: int
    n_skipped: int = 0


class BoundaryEdge(BaseModel):
    edge: List[int] = Field(..., min_length=2, max_length=2)
    tag: str


class MeshDescriptor(BaseModel):
    vertices: List[List[float]]
    triangles: List[List[int]]
    boundary: List[BoundaryEdge]


class SolverLogEntry(BaseModel):
    iter: int
    energy: float
    grad_norm: float
    delta: float


class MonotonicityRow(BaseModel):
    eps_coarse: float
    eps_fine: float
    max_violation: float
    n_points: int
    passed: bool


class SchemeReport(BaseModel):
    epsilons: List[float]
    monotonicity: List[MonotonicityRow] = Field(default_factory=list)
    sandwich_violations: int = 0
    sandwich_checked: int = 0
    comparison_error: Optional[float] = None
    extrapolated_error: Optional[float] = None
    passed: bool = True


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0

    @field_validator("params")
    @classmethod
    def tolerances_positive(cls, params: Dict[str, Any]) -> Dict[str, Any]:
        for key, value in params.items():
            if (key == "h" or key.endswith("tol")) and value is not None and float(value) <= 0.0:
                raise ValueError(f"{key} must be positive, got {value}")
        return params

from typing import List

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", env_prefix="PHARMONIC_")

    # spectral integration
    INTEGRATOR_RTOL: float = 1e-10
    INTEGRATOR_ATOL: float = 1e-12
    BISECTION_XTOL: float = 1e-10
    SHOOTING_MAX_BRACKET: float = 64.0
    ZERO_SEARCH_LIMIT: float = 4.0 * 3.141592653589793
    PROFILE_RESOLUTION: int = 512

    # finite-difference verification
    FD_STEP: float = 1e-3
    RESIDUAL_THRESHOLD: float = 1e-4
    NORMALIZATION_FLOOR: float = 1e-8
    GRADIENT_FLOOR: float = 1e-6
    EXCLUSION_FACTOR: float = 10.0
    ROUNDING_FLOOR: float = 1e-11
    JACOBIAN_STEP: float = 1e-6
    SECTOR_CORNER_CAP: float = 1e-3

    # finite-element solver
    SOLVER_TOL: float = 1e-10
    SOLVER_MAX_NEWTON: int = 60
    DELTA_SCHEDULE: List[float] = [1e-2, 1e-4, 1e-8, 0.0]
    MONOTONICITY_TOL: float = 1e-8
    MESH_GRADING: float = 0.2
    MESH_MIN_FACTOR: float = 8.0

    # cli
    LOG_LEVEL: str = "INFO"
    OUTPUT_DIR: str = "out"
    DEFAULT_SEED: int = 0
    RENDER_LEVELS: int = 12


settings = Settings()

from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, field_validator

from .results import Orientation, Unit


class RunConfig(BaseModel):
    """Parsed command line for one subcommand run; rate values are in nats."""

    model_config = ConfigDict(protected_namespaces=())

    command: str
    model_path: Optional[Path] = None
    units: Unit = "nats"
    D_grid: List[float] = []
    rate_grid: List[float] = []
    orientation: Orientation = "R"
    mesh: int = 200
    n_list: List[int] = []
    trials: int = 1
    seed: int = 0
    out: Optional[Path] = None
    normalize: bool = False
    exhaustive: bool = False
    generator: str = "type-covering"
    sources: List[List[float]] = []
    typicality: float = 1.0

    @field_validator("D_grid", "rate_grid", "n_list")
    @classmethod
    def _sorted(cls, values: List[float]) -> List[float]:
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("grid values must be sorted ascending")
        return values

    @field_validator("D_grid")
    @classmethod
    def _nonnegative(cls, values: List[float]) -> List[float]:
        if any(v < 0 for v in values):
            raise ValueError("distortion levels must be nonnegative")
        return values

    @field_validator("trials", "mesh")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be a positive integer")
        return value

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..core import config
from .model import Channel

Unit = Literal["bits", "nats"]
Regime = Literal["zero", "finite", "infinite"]
Orientation = Literal["R", "r"]


def to_units(nats: float, units: Unit) -> float:
    return nats / config.LN2 if units == "bits" else nats


class InfoValue(BaseModel):
    """A nonnegative information quantity stored in nats."""

    model_config = ConfigDict(frozen=True)

    nats: float

    @field_validator("nats")
    @classmethod
    def _nonnegative(cls, value: float) -> float:
        if np.isnan(value) or value < 0:
            raise ValueError(f"information value must be nonnegative, got {value!r}")
        return float(value)

    @property
    def bits(self) -> float:
        return self.nats / config.LN2

    def in_units(self, unit: Unit) -> float:
        return to_units(self.nats, unit)

    def __float__(self) -> float:
        return self.nats


class RatePoint(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    D: float
    rate_nats: float
    channel: Channel
    lam: float
    achieved_distortion: float
    output_law: np.ndarray


class RateCurve(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_digest: str
    points: List[RatePoint]

    @property
    def D(self) -> List[float]:
        return [point.D for point in self.points]

    @property
    def values(self) -> List[float]:
        return [point.rate_nats for point in self.points]


class ExponentResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    R: float
    D: float
    value_nats: float
    regime: Regime
    minimizer_Q: Optional[np.ndarray] = None
    constraint_value: Optional[float] = None
    boundary: bool = False

    @model_validator(mode="after")
    def _consistent(self) -> "ExponentResult":
        if self.regime == "zero" and self.value_nats != 0.0:
            raise ValueError("zero regime must carry value 0")
        if self.regime == "infinite" and self.value_nats != float("inf"):
            raise ValueError("infinite regime must carry value inf")
        if self.regime == "finite" and not 0.0 <= self.value_nats < float("inf"):
            raise ValueError(f"finite regime value out of range: {self.value_nats!r}")
        return self

    @property
    def label(self) -> str:
        return "boundary" if self.boundary else self.regime


class ExponentSample(BaseModel):
    x: float
    result: ExponentResult


class ExponentCurve(BaseModel):
    """Samples of E* along a rate grid at fixed D.

    In orientation "r" the grid is r = -R and r_infinite <= r_zero; in
    orientation "R" the boundaries are (g(P), sup g) in that order.
    """

    D: float
    orientation: Orientation
    samples: List[ExponentSample]
    r_infinite: float
    r_zero: float

    @model_validator(mode="after")
    def _ordered(self) -> "ExponentCurve":
        low, high = (self.r_infinite, self.r_zero) if self.orientation == "r" else (self.r_zero, self.r_infinite)
        if low > high + config.FEASIBILITY_SLACK:
            raise ValueError("regime boundaries are out of order")
        return self


class CoverReport(BaseModel):
    n: int
    D: float
    R_nats: Optional[float] = None
    mass_log: float
    error_prob: float
    empirical_exponent: float
    mean_min_distortion: float
    codebook_size: int
    codebook_digest: str
    seed: Optional[int] = None
    generator: str = "manual"
    source: Optional[List[float]] = None

    @field_validator("error_prob")
    @classmethod
    def _probability(cls, value: float) -> float:
        if not -config.PROB_TOL <= value <= 1.0 + config.PROB_TOL:
            raise ValueError(f"error probability out of [0, 1]: {value!r}")
        return min(max(value, 0.0), 1.0)


class SweepReport(BaseModel):
    R_nats: float
    D: float
    reports: List[CoverReport]
    slope: float
    intercept: float
    theory_exponent: Optional[float] = None
    flagged: List[int] = []
    error_floors: List[Optional[float]] = []

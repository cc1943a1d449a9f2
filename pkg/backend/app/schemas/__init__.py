from .model import Alphabet, Channel, DistortionMatrix, Distribution, MassFunction, Model, ModelFile
from .results import (
    CoverReport,
    ExponentCurve,
    ExponentResult,
    ExponentSample,
    InfoValue,
    RateCurve,
    RatePoint,
    SweepReport,
)
from .run import RunConfig

__all__ = [
    "Alphabet",
    "Channel",
    "DistortionMatrix",
    "Distribution",
    "MassFunction",
    "Model",
    "ModelFile",
    "CoverReport",
    "ExponentCurve",
    "ExponentResult",
    "ExponentSample",
    "InfoValue",
    "RateCurve",
    "RatePoint",
    "SweepReport",
    "RunConfig",
]

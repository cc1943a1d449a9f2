"""Argument types and helpers shared by the subcommands."""
import argparse
import math
from typing import List

from ..core import config
from ..core.errors import UsageError
from ..schemas.model import Model
from ..schemas.results import Unit
from ..schemas.run import RunConfig
from ..services.model import load_model


def float_list(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("expected positive integers")
    return values


def grid(text: str) -> List[float]:
    """`a:b:step`, inclusive of b, values rounded to 12 decimals."""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:step, got {text!r}") from None
    if not step > 0 or stop < start:
        raise argparse.ArgumentTypeError("grid needs step > 0 and a <= b")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(count)]


def source_list(text: str) -> List[List[float]]:
    """`p,q;p,q` -> [[p, q], [p, q]]."""
    return [float_list(part) for part in text.split(";") if part.strip()]


def to_nats(values: List[float], units: Unit) -> List[float]:
    return [v * config.LN2 for v in values] if units == "bits" else list(values)


def from_nats(value: float, units: Unit) -> float:
    return value / config.LN2 if units == "bits" else value


def require_model(run: RunConfig) -> Model:
    if run.model_path is None:
        raise UsageError("--model is required")
    return load_model(run.model_path, normalize=True if run.normalize else None)


def require(values: List, flag: str) -> List:
    if not values:
        raise UsageError(f"{flag} is required")
    return values


def metadata(run: RunConfig, model: Model) -> dict:
    return {"command": run.command, "model": model.digest, "units": run.units}

"""
Model construction and validation.

Turns raw alphabets, laws, masses and distortion tables (or a JSON model
file) into a validated `Model`. Every failure surfaces as a
`ModelValidationError` whose message names the offending entry.
"""
import json
import logging
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from ..core import config
from ..core.errors import ModelValidationError
from ..schemas.model import (
    Alphabet,
    DistortionMatrix,
    Distribution,
    MassFunction,
    Model,
    ModelFile,
    Word,
)

logger = logging.getLogger(__name__)

AlphabetLike = Union[Alphabet, Sequence[str]]


def _raw(values: Any) -> np.ndarray:
    return np.array(values, dtype=float)


def hamming_distortion(source: AlphabetLike, reproduction: Optional[AlphabetLike] = None) -> DistortionMatrix:
    """0 where the labels agree, 1 elsewhere."""
    source = Alphabet.of(source)
    reproduction = source if reproduction is None else Alphabet.of(reproduction)
    values = [[0.0 if a == b else 1.0 for b in reproduction.symbols] for a in source.symbols]
    return DistortionMatrix(source=source, reproduction=reproduction, values=values)


def normalize_distortion(rho: Union[DistortionMatrix, Any]) -> Union[DistortionMatrix, np.ndarray]:
    """
    Subtract each row's minimum so every source symbol has a zero-cost reproduction.

    Idempotent. Returns the same kind of object it was given.
    """
    if isinstance(rho, DistortionMatrix):
        values = rho.values - rho.values.min(axis=1, keepdims=True)
        return DistortionMatrix(source=rho.source, reproduction=rho.reproduction, values=values)
    values = _raw(rho)
    return values - values.min(axis=1, keepdims=True)


def validate_model(
    source: AlphabetLike,
    reproduction: Optional[AlphabetLike],
    P: Any,
    M: Any,
    rho: Any,
    normalize: bool = False,
    renormalize: bool = False,
) -> Model:
    """
    Check and assemble a covering problem.

    Args:
        source: Source alphabet (at least two symbols)
        reproduction: Reproduction alphabet, or None to reuse the source alphabet
        P: Source law, strictly positive and summing to 1
        M: Mass function on the reproduction alphabet, strictly positive
        rho: Distortion table of shape (|A|, |Â|), nonnegative
        normalize: Subtract row minima from rho before the zero-per-row check
        renormalize: Rescale P to sum 1 instead of rejecting it

    Returns:
        Validated Model

    Raises:
        ModelValidationError: Naming the first offending entry
    """
    try:
        source = Alphabet.of(source)
        reproduction = source if reproduction is None else Alphabet.of(reproduction)
    except ValidationError as exc:
        raise ModelValidationError(f"invalid alphabet: {exc.errors()[0]['msg']}") from None
    if source.size < 2:
        raise ModelValidationError("source alphabet needs at least 2 symbols")

    p, m, d = _raw(P), _raw(M), _raw(rho)
    if p.shape != (source.size,):
        raise ModelValidationError(f"dimension mismatch: P has shape {p.shape}, expected ({source.size},)")
    if m.shape != (reproduction.size,):
        raise ModelValidationError(f"dimension mismatch: M has shape {m.shape}, expected ({reproduction.size},)")
    if d.shape != (source.size, reproduction.size):
        raise ModelValidationError(
            f"dimension mismatch: rho has shape {d.shape}, expected ({source.size}, {reproduction.size})"
        )
    for name, values in (("P", p), ("M", m), ("rho", d)):
        if not np.all(np.isfinite(values)):
            raise ModelValidationError(f"non-finite {name} entry")

    bad = np.flatnonzero(p <= 0)
    if bad.size:
        raise ModelValidationError(f"nonpositive P entry at index {int(bad[0])}")
    total = float(p.sum())
    if abs(total - 1.0) > config.PROB_TOL:
        if not renormalize:
            raise ModelValidationError(f"P sums to {total!r}, not 1")
        logger.info("Renormalizing source law", extra={"sum": total})
        p = p / total
    bad = np.flatnonzero(m <= 0)
    if bad.size:
        raise ModelValidationError(f"nonpositive M entry at index {int(bad[0])}")
    negative = np.argwhere(d < 0)
    if negative.size:
        i, j = (int(v) for v in negative[0])
        raise ModelValidationError(f"negative rho entry at ({i}, {j})")

    if normalize:
        d = normalize_distortion(d)
    rows = np.flatnonzero(~np.any(d == 0.0, axis=1))
    if rows.size:
        raise ModelValidationError(f"row {int(rows[0])} has no zero")

    try:
        return Model(
            P=Distribution(alphabet=source, probs=p),
            M=MassFunction(alphabet=reproduction, masses=m),
            rho=DistortionMatrix(source=source, reproduction=reproduction, values=d),
        )
    except ValidationError as exc:
        raise ModelValidationError(exc.errors()[0]["msg"]) from None


def load_model(path: Union[str, Path], normalize: Optional[bool] = None) -> Model:
    """
    Read a JSON model file.

    `M` may be a list, "counting" (M = 1) or "P" (M = P, square models only);
    `rho` may be a table or "hamming". `normalize` overrides the file's
    `auto_normalize_rho` flag when given.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ModelValidationError(f"model file not found: {path}") from None
    except OSError as exc:
        raise ModelValidationError(f"cannot read model file {path}: {exc.strerror}") from None

    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None

    try:
        spec = ModelFile.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ModelValidationError(f"{path}: {where}: {first['msg']}") from None

    source = spec.source_alphabet
    reproduction = spec.reproduction_alphabet or source
    if spec.M == "counting":
        masses: Any = np.ones(len(reproduction))
    elif spec.M == "P":
        if list(reproduction) != list(source):
            raise ModelValidationError(f"{path}: M = P requires identical source and reproduction alphabets")
        masses = spec.P
    else:
        masses = spec.M
    if spec.rho == "hamming":
        try:
            table: Any = hamming_distortion(source, reproduction).values
        except ValidationError as exc:
            raise ModelValidationError(f"{path}: {exc.errors()[0]['msg']}") from None
    else:
        table = spec.rho

    model = validate_model(
        source,
        reproduction,
        spec.P,
        masses,
        table,
        normalize=spec.auto_normalize_rho if normalize is None else normalize,
    )
    logger.info("Loaded model", extra={"path": str(path), "digest": model.digest})
    return model


def product_distortion(x: Word, y: Word, rho: Union[DistortionMatrix, Model]) -> float:
    """Per-letter average distortion between two equal-length words."""
    if isinstance(rho, Model):
        rho = rho.rho
    xs = rho.source.encode(x)
    ys = rho.reproduction.encode(y)
    if xs.size != ys.size:
        raise ValueError(f"length mismatch: {xs.size} vs {ys.size}")
    if xs.size == 0:
        raise ValueError("words must be nonempty")
    return float(rho.values[xs, ys].mean())

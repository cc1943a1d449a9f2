"""Problem-instance types: alphabets, laws, mass, distortion and channels.

All arrays are copied on construction and marked read-only, so a validated
instance can be shared freely between concurrent solver calls.
"""
import hashlib
import json
from typing import Any, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from ..core import config

Word = Union[str, Sequence[str], Sequence[int], np.ndarray]


def frozen_array(values: Any, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must contain only finite numbers")
    array.setflags(write=False)
    return array


class Alphabet(BaseModel):
    model_config = ConfigDict(frozen=True)

    symbols: Tuple[str, ...]

    @field_validator("symbols")
    @classmethod
    def _distinct(cls, symbols: Tuple[str, ...]) -> Tuple[str, ...]:
        if not symbols:
            raise ValueError("alphabet must contain at least one symbol")
        seen = set()
        for position, symbol in enumerate(symbols):
            if symbol in seen:
                raise ValueError(f"duplicate symbol {symbol!r} at index {position}")
            seen.add(symbol)
        return symbols

    @classmethod
    def of(cls, symbols: Union["Alphabet", Sequence[str]]) -> "Alphabet":
        if isinstance(symbols, Alphabet):
            return symbols
        return cls(symbols=tuple(str(symbol) for symbol in symbols))

    @classmethod
    def numbered(cls, size: int) -> "Alphabet":
        return cls(symbols=tuple(str(i) for i in range(size)))

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def single_char(self) -> bool:
        return all(len(symbol) == 1 for symbol in self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise ValueError(f"symbol {symbol!r} is not in the alphabet {list(self.symbols)}") from None

    def encode(self, word: Word) -> np.ndarray:
        """Turn a word (string, label sequence or index array) into symbol indices."""
        if isinstance(word, np.ndarray) and word.dtype.kind in "iu":
            indices = word.astype(np.intp)
        elif isinstance(word, str):
            tokens = list(word) if self.single_char else word.split()
            indices = np.array([self.index(token) for token in tokens], dtype=np.intp)
        else:
            items = list(word)
            if all(isinstance(item, (int, np.integer)) for item in items):
                indices = np.array(items, dtype=np.intp)
            else:
                indices = np.array([self.index(str(item)) for item in items], dtype=np.intp)
        if indices.size and (indices.min() < 0 or indices.max() >= self.size):
            raise ValueError(f"symbol index out of range for an alphabet of size {self.size}")
        return indices

    def decode(self, indices: Sequence[int]) -> str:
        labels = [self.symbols[int(i)] for i in indices]
        return "".join(labels) if self.single_char else " ".join(labels)


class Distribution(BaseModel):
    """A law on an alphabet; zeros are allowed here, strict positivity is a model check."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alphabet: Alphabet
    probs: np.ndarray

    @field_validator("probs", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return frozen_array(value, 1, "probs")

    @model_validator(mode="after")
    def _check(self) -> "Distribution":
        if self.probs.shape != (self.alphabet.size,):
            raise ValueError(
                f"dimension mismatch: {self.probs.size} probabilities for {self.alphabet.size} symbols"
            )
        negative = np.flatnonzero(self.probs < 0)
        if negative.size:
            raise ValueError(f"negative probability at index {int(negative[0])}")
        total = float(self.probs.sum())
        if abs(total - 1.0) > config.PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        return self

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return np.asarray(self.probs, dtype=dtype)


class MassFunction(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alphabet: Alphabet
    masses: np.ndarray

    @field_validator("masses", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return frozen_array(value, 1, "masses")

    @model_validator(mode="after")
    def _check(self) -> "MassFunction":
        if self.masses.shape != (self.alphabet.size,):
            raise ValueError(
                f"dimension mismatch: {self.masses.size} masses for {self.alphabet.size} symbols"
            )
        nonpositive = np.flatnonzero(self.masses <= 0)
        if nonpositive.size:
            raise ValueError(f"nonpositive M entry at index {int(nonpositive[0])}")
        return self

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def r_max(self) -> float:
        """log M(A), the largest meaningful mass rate (nats)."""
        return float(np.log(self.total))

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return np.asarray(self.masses, dtype=dtype)


class DistortionMatrix(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    source: Alphabet
    reproduction: Alphabet
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return frozen_array(value, 2, "rho")

    @model_validator(mode="after")
    def _check(self) -> "DistortionMatrix":
        expected = (self.source.size, self.reproduction.size)
        if self.values.shape != expected:
            raise ValueError(f"dimension mismatch: rho has shape {self.values.shape}, expected {expected}")
        negative = np.argwhere(self.values < 0)
        if negative.size:
            i, j = (int(v) for v in negative[0])
            raise ValueError(f"negative rho entry at ({i}, {j})")
        return self

    @property
    def d_max(self) -> float:
        return float(self.values.max())

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return np.asarray(self.values, dtype=dtype)


class Channel(BaseModel):
    """Row-stochastic W(y|x); together with P it fixes the joint law P(x)W(y|x)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    source: Alphabet
    reproduction: Alphabet
    w: np.ndarray

    @field_validator("w", mode="before")
    @classmethod
    def _as_array(cls, value: Any) -> np.ndarray:
        return frozen_array(value, 2, "w")

    @model_validator(mode="after")
    def _check(self) -> "Channel":
        expected = (self.source.size, self.reproduction.size)
        if self.w.shape != expected:
            raise ValueError(f"dimension mismatch: channel has shape {self.w.shape}, expected {expected}")
        if np.any(self.w < 0):
            raise ValueError("channel entries must be nonnegative")
        sums = self.w.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > config.PROB_TOL)
        if bad.size:
            raise ValueError(f"channel row {int(bad[0])} sums to {float(sums[bad[0]])!r}, not 1")
        return self

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return np.asarray(self.w, dtype=dtype)


class Model(BaseModel):
    """A validated covering problem: source law P, mass M and distortion rho."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    P: Distribution
    M: MassFunction
    rho: DistortionMatrix

    @property
    def source(self) -> Alphabet:
        return self.rho.source

    @property
    def reproduction(self) -> Alphabet:
        return self.rho.reproduction

    @property
    def p(self) -> np.ndarray:
        return self.P.probs

    @property
    def m(self) -> np.ndarray:
        return self.M.masses

    @property
    def log_m(self) -> np.ndarray:
        return np.log(self.M.masses)

    @property
    def distortion(self) -> np.ndarray:
        return self.rho.values

    @property
    def d_max(self) -> float:
        return self.rho.d_max

    @property
    def r_max(self) -> float:
        return self.M.r_max

    @property
    def digest(self) -> str:
        """First 16 hex chars of SHA-256 over the canonical JSON of the instance."""
        canonical = json.dumps(
            {
                "source_alphabet": list(self.source.symbols),
                "reproduction_alphabet": list(self.reproduction.symbols),
                "P": [float(v) for v in self.p],
                "M": [float(v) for v in self.m],
                "rho": [[float(v) for v in row] for row in self.distortion],
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def with_source(self, probs: Any) -> "Model":
        """Same mass and distortion with the source law replaced (zeros allowed)."""
        law = Distribution(alphabet=self.source, probs=probs)
        return self.model_copy(update={"P": law})


class ModelFile(BaseModel):
    """On-disk JSON layout of a model."""

    model_config = ConfigDict(extra="forbid")

    source_alphabet: List[str]
    reproduction_alphabet: Optional[List[str]] = None
    P: List[float]
    M: Union[Literal["counting", "P"], List[float]]
    rho: Union[Literal["hamming"], List[List[float]]]
    auto_normalize_rho: bool = False

"""Entropy, divergence, mutual information and the mass-weighted objective (nats)."""
from typing import Any, Union

import numpy as np
from scipy.special import entr, rel_entr

from ..core import config
from ..schemas.results import InfoValue

Number = Union[float, np.ndarray]


def _vector(values: Any) -> np.ndarray:
    return np.asarray(values, dtype=float)


def _check_law(values: np.ndarray, name: str) -> None:
    if values.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if np.any(values < 0) or abs(values.sum() - 1.0) > config.PROB_TOL:
        raise ValueError(f"{name} is not a probability vector")


def entropy(P: Any) -> InfoValue:
    p = _vector(P)
    _check_law(p, "P")
    return InfoValue(nats=max(float(entr(p).sum()), 0.0))


def relative_entropy(mu: Any, nu: Any) -> InfoValue:
    """H(mu||nu); +inf when mu charges a point nu does not."""
    a, b = _vector(mu), _vector(nu)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    _check_law(a, "mu")
    _check_law(b, "nu")
    return InfoValue(nats=max(float(rel_entr(a, b).sum()), 0.0))


def mutual_information(P: Any, W: Any) -> InfoValue:
    p, w = _vector(P), _vector(W)
    if w.shape[0] != p.shape[0]:
        raise ValueError(f"dimension mismatch: P has {p.shape[0]} entries, W has {w.shape[0]} rows")
    return InfoValue(nats=max(float(mutual_information_many(p[None], w[None])[0]), 0.0))


def objective(P: Any, W: Any, M: Any) -> float:
    """I(P,W) + E log M(Y); may be negative."""
    p, w, m = _vector(P), _vector(W), _vector(M)
    if w.shape != (p.size, m.size):
        raise ValueError(f"dimension mismatch: W has shape {w.shape}, expected ({p.size}, {m.size})")
    return float(objective_many(p[None], w[None], np.log(m))[0])


def mutual_information_many(P: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Row-wise I(P_b, W_b) for P of shape (B, |A|) and W of shape (B, |A|, |Â|)."""
    joint = P[:, :, None] * W
    output = joint.sum(axis=1)
    product = P[:, :, None] * output[:, None, :]
    return rel_entr(joint, product).sum(axis=(1, 2))


def objective_many(P: np.ndarray, W: np.ndarray, log_m: np.ndarray) -> np.ndarray:
    output = np.einsum("bx,bxy->by", P, W)
    return mutual_information_many(P, W) + output @ log_m


def to_bits(nats: Number) -> Number:
    return nats / config.LN2


def to_nats(bits: Number) -> Number:
    return bits * config.LN2

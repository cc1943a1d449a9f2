"""
Optimal covering error exponent

    E*(R,D) = inf { H(Q||P) : R(D;Q,M) > R }

with its regime decisions and the corollary specializations: Hoeffding
(hypothesis testing), Marton (counting measure) and concentration (M = P).
"""
import logging
import math
import threading
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.special import rel_entr

from ..core import config
from ..core.errors import CapExceededError
from ..core.executor import parallel_map
from ..schemas.model import Alphabet, DistortionMatrix, Distribution, Model
from ..schemas.results import ExponentCurve, ExponentResult, ExponentSample, Orientation
from . import information
from .model import hamming_distortion, validate_model
from .rate_solver import rate_many, simplex_mesh

logger = logging.getLogger(__name__)

BINARY_SUP_MESH = 400
SIMPLEX_SUP_MESH = 40
SCAN_POINTS = 256
REFINE_STARTS = 3
REFINE_XTOL = 1e-9
REFINE_MAX_ITER = 60
CROSSING_XTOL = 1e-12

_sup_cache: Dict[Tuple[str, float], Tuple[float, np.ndarray]] = {}
_mesh_cache: Dict[Tuple[str, float, int], Tuple[np.ndarray, np.ndarray]] = {}
_cache_lock = threading.Lock()


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    index = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / index > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _divergence(Q: np.ndarray, p: np.ndarray) -> np.ndarray:
    return rel_entr(Q, p[None, :] if Q.ndim == 2 else p).sum(axis=-1)


def _anchors(p: np.ndarray) -> np.ndarray:
    """Corners, the centroid and corner/centroid midpoints."""
    k = p.size
    corners = np.eye(k)
    centroid = np.full((1, k), 1.0 / k)
    if k == 2:
        return np.vstack([corners, centroid])
    return np.vstack([corners, centroid, 0.5 * (corners + centroid)])


def _refine_sup(model: Model, D: float, start: np.ndarray, step: float) -> Tuple[float, np.ndarray]:
    k = model.source.size
    if k == 2:
        s0 = float(start[1])
        found = optimize.minimize_scalar(
            lambda s: -rate_many(model, D, [[1.0 - s, s]]).values[0],
            bounds=(max(0.0, s0 - step), min(1.0, s0 + step)),
            method="bounded",
            options={"xatol": REFINE_XTOL, "maxiter": REFINE_MAX_ITER},
        )
        Q = np.array([1.0 - found.x, found.x])
    else:

        def negative(x: np.ndarray):
            batch = rate_many(model, D, [project_to_simplex(x)])
            return -batch.values[0], -batch.gradients[0]

        found = optimize.minimize(
            negative,
            start,
            jac=True,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * k,
            constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0, "jac": lambda x: np.ones(k)}],
            options={"ftol": 1e-13, "maxiter": REFINE_MAX_ITER},
        )
        Q = project_to_simplex(found.x)
    return float(rate_many(model, D, [Q]).values[0]), Q


def _starts(points: np.ndarray, values: np.ndarray, separation: float) -> List[int]:
    """Best grid points, skipping any within `separation` of a better one."""
    chosen: List[int] = []
    for index in np.argsort(-values, kind="stable"):
        if all(np.max(np.abs(points[index] - points[j])) > separation for j in chosen):
            chosen.append(int(index))
        if len(chosen) == REFINE_STARTS:
            break
    return chosen


def sup_rate(model: Model, D: float) -> Tuple[float, np.ndarray]:
    """
    sup over Q of R(D;Q,M) and a maximizer.

    Grid search on small alphabets plus multi-start local refinement; the
    model's own P is always a candidate. Results are cached per (digest, D).
    """
    key = (model.digest, float(D))
    with _cache_lock:
        if key in _sup_cache:
            return _sup_cache[key]

    k = model.source.size
    candidates = [model.p[None, :], _anchors(model.p)]
    step = 0.0
    if k <= 3:
        mesh = BINARY_SUP_MESH if k == 2 else SIMPLEX_SUP_MESH
        candidates.append(simplex_mesh(k, mesh))
        step = 1.0 / mesh
    points = np.vstack(candidates)
    values = rate_many(model, D, points).values
    starts = _starts(points, values, 2.0 * step if step else 0.25)

    best_value, best_Q = float(values[starts[0]]), points[starts[0]].copy()
    for index in starts:
        value, Q = _refine_sup(model, D, points[index], step or 0.5)
        if value > best_value:
            best_value, best_Q = value, Q

    logger.debug("Computed rate supremum", extra={"D": D, "sup": best_value, "digest": model.digest})
    with _cache_lock:
        _sup_cache[key] = (best_value, best_Q)
    return best_value, best_Q


def regime_boundaries(model: Model, D: float, orientation: Orientation = "r") -> Tuple[float, float]:
    """
    Rates separating the three regimes at distortion D.

    Orientation "r" returns (r_infinite, r_zero) = (-sup g, -g(P)); orientation
    "R" returns (g(P), sup g), where g(Q) = R(D;Q,M).
    """
    g_p = float(rate_many(model, D).values[0])
    g_max = max(sup_rate(model, D)[0], g_p)
    if orientation == "r":
        return -g_max, -g_p
    return g_p, g_max


def _crossing(model: Model, D: float, R: float, p: np.ndarray, anchor: np.ndarray, lo: float, hi: float) -> float:
    """Smallest t in (lo, hi] with R(D; P + t(anchor - P)) >= R, to CROSSING_XTOL."""

    def excess(t: float) -> float:
        return float(rate_many(model, D, [p + t * (anchor - p)]).values[0]) - R

    at_hi = excess(hi)
    if at_hi <= 0.0:
        return hi
    at_lo = excess(lo)
    if at_lo >= 0.0:
        return lo
    t = optimize.brentq(excess, lo, hi, xtol=CROSSING_XTOL, maxiter=200)
    for _ in range(8):
        if excess(t) >= 0.0 or t >= hi:
            break
        t = min(hi, t + 2 * CROSSING_XTOL)
    return t if excess(t) >= 0.0 else hi


def _polish(model: Model, R: float, D: float, start: np.ndarray) -> Optional[np.ndarray]:
    """SLSQP on min H(Q||P) subject to R(D;Q,M) >= R, for alphabets of 3 or more symbols."""
    p, k = model.p, model.source.size
    last: Dict[bytes, Tuple[float, np.ndarray]] = {}

    def constraint(x: np.ndarray) -> Tuple[float, np.ndarray]:
        key = x.tobytes()
        if key not in last:
            batch = rate_many(model, D, [project_to_simplex(x)])
            last.clear()
            last[key] = (float(batch.values[0]) - R, batch.gradients[0])
        return last[key]

    def divergence(x: np.ndarray):
        q = np.clip(x, 0.0, None)
        return float(rel_entr(q, p).sum()), np.log(np.maximum(q, 1e-300) / p) + 1.0

    found = optimize.minimize(
        divergence,
        start,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * k,
        constraints=[
            {"type": "eq", "fun": lambda x: x.sum() - 1.0, "jac": lambda x: np.ones(k)},
            {"type": "ineq", "fun": lambda x: constraint(x)[0], "jac": lambda x: constraint(x)[1]},
        ],
        options={"ftol": 1e-14, "maxiter": REFINE_MAX_ITER},
    )
    Q = project_to_simplex(found.x)
    if rate_many(model, D, [Q]).values[0] >= R - config.FEASIBILITY_SLACK:
        return Q
    return None


def _minimize_divergence(model: Model, R: float, D: float, Q_max: np.ndarray) -> Tuple[np.ndarray, float]:
    p, k = model.p, model.source.size
    anchors = np.vstack([_anchors(p), Q_max[None, :]])
    t = np.linspace(0.0, 1.0, SCAN_POINTS + 1)[1:]
    segment = p[None, None, :] + t[:, None, None] * (anchors[None, :, :] - p[None, None, :])
    values = rate_many(model, D, segment.reshape(-1, k)).values.reshape(len(t), len(anchors))

    # divergence is nondecreasing along each ray from P
    brackets: List[Tuple[float, int, float, float]] = []
    for a in range(len(anchors)):
        feasible = np.flatnonzero(values[:, a] >= R)
        if not feasible.size:
            continue
        j = int(feasible[0])
        lo = float(t[j - 1]) if j > 0 else 0.0
        brackets.append((float(_divergence(p + lo * (anchors[a] - p), p)), a, lo, float(t[j])))

    found: List[np.ndarray] = []
    best = math.inf
    for floor, a, lo, hi in sorted(brackets):
        if floor >= best:
            break
        Q = p + _crossing(model, D, R, p, anchors[a], lo, hi) * (anchors[a] - p)
        found.append(Q)
        best = min(best, float(_divergence(Q, p)))
    if not found:
        found.append(Q_max)

    candidates = np.array(found)
    divergences = _divergence(candidates, p)
    order = np.argsort(divergences, kind="stable")
    best_Q, best = candidates[order[0]], float(divergences[order[0]])
    if k > 2:
        for index in order[:REFINE_STARTS]:
            Q = _polish(model, R, D, candidates[index])
            if Q is not None and float(rel_entr(Q, p).sum()) < best:
                best_Q, best = Q, float(rel_entr(Q, p).sum())
    return best_Q, best


def _check_levels(model: Model, R: float, D: float) -> Tuple[float, float]:
    R, D = float(R), float(D)
    if math.isnan(R):
        raise ValueError("rate must be a number")
    if not math.isfinite(D) or not 0.0 <= D < model.d_max:
        raise ValueError(f"distortion level must satisfy 0 <= D < {model.d_max!r}, got {D!r}")
    return R, D


def exponent(model: Model, R: float, D: float) -> ExponentResult:
    """
    E*(R,D) with its regime.

    Args:
        model: Validated model
        R: Mass-rate threshold in nats (r = -R in the concentration orientation)
        D: Distortion level, 0 <= D < d_max

    Returns:
        ExponentResult carrying the value, regime, minimizer and boundary flag

    Raises:
        ValueError: If D is out of range or R is not a number
        RateConvergenceError: Propagated from the rate solver
    """
    R, D = _check_levels(model, R, D)
    g_p = float(rate_many(model, D).values[0])
    if R <= g_p + config.BOUNDARY_TOL:
        boundary = abs(R - g_p) <= config.BOUNDARY_TOL
        return ExponentResult(
            R=R, D=D, value_nats=0.0, regime="zero", minimizer_Q=model.p.copy(), constraint_value=g_p, boundary=boundary
        )

    g_max, Q_max = sup_rate(model, D)
    if R >= g_max - config.FEASIBILITY_SLACK:
        return ExponentResult(
            R=R, D=D, value_nats=float("inf"), regime="infinite", boundary=abs(R - g_max) <= config.BOUNDARY_TOL
        )

    Q, value = _minimize_divergence(model, R, D, Q_max)
    constraint = float(rate_many(model, D, [Q]).values[0])
    logger.debug("Solved exponent", extra={"R": R, "D": D, "value": value, "digest": model.digest})
    return ExponentResult(
        R=R,
        D=D,
        value_nats=max(value, 0.0),
        regime="finite",
        minimizer_Q=Q,
        constraint_value=constraint,
        boundary=g_max - R <= config.BOUNDARY_TOL,
    )


def exponent_sweep(model: Model, grid: Iterable[float], D: float, orientation: Orientation = "R") -> ExponentCurve:
    """E* along a sorted grid of R (orientation "R") or r = -R (orientation "r")."""
    xs = [float(x) for x in grid]
    if any(b < a for a, b in zip(xs, xs[1:])):
        raise ValueError("rate grid must be sorted ascending")
    sign = -1.0 if orientation == "r" else 1.0
    first, second = regime_boundaries(model, D, orientation)
    results = parallel_map(lambda x: exponent(model, sign * x, D), xs)
    if orientation == "r":
        r_infinite, r_zero = first, second
    else:
        r_zero, r_infinite = first, second
    return ExponentCurve(
        D=float(D),
        orientation=orientation,
        samples=[ExponentSample(x=x, result=result) for x, result in zip(xs, results)],
        r_infinite=r_infinite,
        r_zero=r_zero,
    )


def exponent_oracle(model: Model, R: float, D: float, mesh: int) -> float:
    """
    Brute-force E*(R,D) over a simplex mesh of source laws (|A| <= 3).

    The best feasible mesh point is refined by bisection along the segment
    from P, which lies outside the feasible set whenever the value is positive.
    """
    k = model.source.size
    if k > 3:
        raise CapExceededError(f"exponent oracle limited to |A| <= 3, got {k}")
    if mesh < 1:
        raise ValueError("oracle mesh must be positive")
    R, D = _check_levels(model, R, D)
    p = model.p
    if rate_many(model, D).values[0] >= R:
        return 0.0

    key = (model.digest, D, int(mesh))
    with _cache_lock:
        cached = _mesh_cache.get(key)
    if cached is None:
        grid = simplex_mesh(k, mesh)
        cached = (grid, rate_many(model, D, grid).values)
        with _cache_lock:
            _mesh_cache[key] = cached
    grid, values = cached

    feasible = values >= R
    if not feasible.any():
        return float("inf")
    divergences = _divergence(grid[feasible], p)
    best = int(np.argmin(divergences))
    Q_best, value = grid[feasible][best], float(divergences[best])

    t = _crossing(model, D, R, p, Q_best, 0.0, 1.0)
    refined = p + t * (Q_best - p)
    return min(value, float(rel_entr(refined, p).sum()))


def _law(values: Any, alphabet: Optional[Sequence[str]] = None) -> Distribution:
    if isinstance(values, Distribution):
        return values
    probs = np.asarray(values, dtype=float)
    labels = Alphabet.of(alphabet) if alphabet is not None else Alphabet.numbered(probs.size)
    return Distribution(alphabet=labels, probs=probs)


def hoeffding_exponent(P0: Any, P1: Any, r: float) -> ExponentResult:
    """
    Best type-II error exponent when the type-I exponent must be at least r.

    Covering with P = P1, M = P0 and Hamming distortion at D = 0, read at R = -r.
    """
    null, alternative = _law(P0), _law(P1, _law(P0).alphabet.symbols)
    limit = information.relative_entropy(alternative.probs, null.probs).nats
    r = float(r)
    if not 0.0 < r < limit:
        raise ValueError(f"r must lie in (0, H(P1||P0) = {limit!r}), got {r!r}")
    model = validate_model(
        null.alphabet,
        None,
        alternative.probs,
        null.probs,
        hamming_distortion(null.alphabet).values,
    )
    return exponent(model, -r, 0.0)


def _distortion(rho: Any, source: Alphabet) -> Tuple[Alphabet, np.ndarray]:
    if isinstance(rho, DistortionMatrix):
        return rho.reproduction, rho.values
    values = np.asarray(rho, dtype=float)
    if values.ndim != 2:
        raise ValueError("rho must be a two-dimensional table")
    reproduction = source if values.shape[1] == source.size else Alphabet.numbered(values.shape[1])
    return reproduction, values


def marton_exponent(P: Any, rho: Any, R: float, D: float) -> ExponentResult:
    """Counting-measure case M = 1: the classical source-coding exponent at rate R."""
    if not math.isfinite(float(R)):
        raise ValueError("rate must be finite")
    law = _law(P)
    reproduction, values = _distortion(rho, law.alphabet)
    model = validate_model(law.alphabet, reproduction, law.probs, np.ones(reproduction.size), values)
    return exponent(model, R, D)


def concentration_exponent(P: Any, rho: Any, r: float, D: float) -> ExponentResult:
    """M = P: the exponent of the probability left uncovered by D-blowups of sets of mass e^{-nr}."""
    if not float(r) > 0:
        raise ValueError("r must be positive")
    law = _law(P)
    reproduction, values = _distortion(rho, law.alphabet)
    if reproduction.symbols != law.alphabet.symbols:
        raise ValueError("M = P needs identical source and reproduction alphabets")
    model = validate_model(law.alphabet, None, law.probs, law.probs, values)
    return exponent(model, -float(r), D)


def talagrand_bound(r: float, D: float) -> float:
    """Transportation-cost lower bound D^2/2 - r on the concentration exponent (Hamming)."""
    r, D = float(r), float(D)
    if r < 0 or D < 0:
        raise ValueError("r and D must be nonnegative")
    return D * D / 2.0 - r

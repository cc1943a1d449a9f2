"""
Generalized rate function R(D;P,M).

    R(D;P,M) = min { I(P,W) + E log M(Y) : E rho(X,Y) <= D }

For a fixed slope lam >= 0 the Lagrangian is minimized over output laws q of

    Phi(q) = -sum_x P(x) log c(x),    c(x) = sum_y q(y) A(x,y),

with the mass-tilted kernel A(x,y) = exp(-lam * rho(x,y)) / M(y). A short run
of alternating minimization is followed by an active-set Newton polish; both
stop only on the certificate Phi(q) - min Phi <= log max_y g(y). The slope is
then searched until the mixture of the bracketing channels, which meets D
exactly, is within RATE_TOL of the dual lower bound Phi(q) - gap - lam * D.
The solver works on batches of source laws at once, which is what the
exponent search and the oracles feed it.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Tuple

import numpy as np
from scipy import optimize
from scipy.special import xlogy

from ..core import config
from ..core.errors import CapExceededError, RateConvergenceError
from ..core.executor import parallel_map
from ..schemas.model import Channel, Model
from ..schemas.results import RateCurve, RatePoint
from . import information

logger = logging.getLogger(__name__)

WARM_START_MIX = 0.02
ENTER_MIX = 1e-6
DROP_TOL = 1e-9
ARMIJO = 1e-4
MAX_BACKTRACKS = 40
ROUNDOFF = 1e-14
LAMBDA_GROWTH = 4.0
MAX_BRACKET_STEPS = 40
MAX_SLOPE_STEPS = 200
SECANT_GUARD = 0.01
CURVE_TOL = 1e-8
TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class RateBatch:
    """R(D;Q,M) for a batch of source laws Q, one row per law."""

    D: float
    sources: np.ndarray
    values: np.ndarray
    channels: np.ndarray
    output_laws: np.ndarray
    lam: np.ndarray
    distortions: np.ndarray
    gradients: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def point(self, model: Model, index: int = 0) -> RatePoint:
        return RatePoint(
            D=self.D,
            rate_nats=float(self.values[index]),
            channel=Channel(source=model.source, reproduction=model.reproduction, w=self.channels[index]),
            lam=float(self.lam[index]),
            achieved_distortion=float(self.distortions[index]),
            output_law=self.output_laws[index],
        )


@dataclass(frozen=True)
class _Tilt:
    """Certified minimizer of the Lagrangian at one slope, per row."""

    q: np.ndarray
    channels: np.ndarray
    c: np.ndarray
    distortions: np.ndarray
    objectives: np.ndarray
    lower: np.ndarray


def simplex_mesh(k: int, mesh: int) -> np.ndarray:
    """All points of the k-simplex whose coordinates are multiples of 1/mesh."""
    if k < 1 or mesh < 1:
        raise ValueError("simplex mesh needs k >= 1 and mesh >= 1")
    if k == 1:
        return np.ones((1, 1))
    bars = np.array(list(itertools.combinations(range(mesh + k - 1), k - 1)), dtype=np.intp)
    edges = np.hstack(
        [np.full((len(bars), 1), -1, dtype=np.intp), bars, np.full((len(bars), 1), mesh + k - 1, dtype=np.intp)]
    )
    return (np.diff(edges, axis=1) - 1) / mesh


def _kernel(lam: np.ndarray, rho: np.ndarray, log_m: np.ndarray) -> np.ndarray:
    return np.exp(-lam[:, None, None] * rho[None] - log_m[None, None, :])


def _support_kernel(batch: int, rho: np.ndarray, log_m: np.ndarray) -> np.ndarray:
    single = np.where(rho == 0.0, np.exp(-log_m)[None, :], 0.0)
    return np.broadcast_to(single, (batch,) + single.shape)


def fallback_rows(rho: np.ndarray) -> np.ndarray:
    """Uniform channel over each row's zero-distortion reproductions."""
    zero = (rho == 0.0).astype(float)
    return zero / zero.sum(axis=1, keepdims=True)


def _warm(q: np.ndarray) -> np.ndarray:
    return (1.0 - WARM_START_MIX) * q + WARM_START_MIX / q.shape[1]


def _evaluate(P: np.ndarray, kernel: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """c = A q, the weights g(y) = sum_x P(x) A(x,y) / c(x) and Phi(q), row by row."""
    c = np.einsum("bxy,by->bx", kernel, q)
    ratio = np.divide(P, c, out=np.zeros_like(P), where=(P > 0) & (c > 0))
    g = np.einsum("bx,bxy->by", ratio, kernel)
    with np.errstate(divide="ignore"):
        value = -xlogy(P, c).sum(axis=1)
    return c, g, value


def _certificate(g: np.ndarray, value: np.ndarray) -> np.ndarray:
    bound = np.log(np.maximum(g.max(axis=1), TINY))
    return np.where(np.isfinite(value), np.maximum(bound, 0.0), np.inf)


def _alternate(P: np.ndarray, kernel: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Alternating minimization until each row is certified or BA_MAX_ITER runs out."""
    gap = np.full(len(P), np.inf)
    rows = np.arange(len(P))
    for _ in range(config.BA_MAX_ITER):
        _, g, value = _evaluate(P[rows], kernel[rows], q[rows])
        gap[rows] = _certificate(g, value)
        keep = gap[rows] > config.GAP_TOL
        rows, g = rows[keep], g[keep]
        if not rows.size:
            break
        step = q[rows] * g
        q[rows] = step / step.sum(axis=1, keepdims=True)
    return q, gap


def _newton_step(
    P: np.ndarray, kernel: np.ndarray, q: np.ndarray, c: np.ndarray, g: np.ndarray, value: np.ndarray
) -> np.ndarray:
    """One damped Newton step on the face spanned by each row's support."""
    batch, size = q.shape
    s = (q > 0).astype(float)
    weight = np.divide(P, c * c, out=np.zeros_like(P), where=c > 0)
    hessian = np.einsum("bx,bxy,bxz->byz", weight, kernel, kernel)
    kkt = np.zeros((batch, size + 1, size + 1))
    kkt[:, :size, :size] = hessian * s[:, :, None] * s[:, None, :] + np.eye(size) * (1.0 - s)[:, None, :]
    kkt[:, :size, size] = s
    kkt[:, size, :size] = s
    rhs = np.concatenate([g * s, np.zeros((batch, 1))], axis=1)
    direction = np.einsum("bij,bj->bi", np.linalg.pinv(kkt, hermitian=True), rhs)[:, :size] * s
    slope = np.einsum("by,by->b", g, direction)

    shrinking = direction < 0
    limit = np.min(np.where(shrinking, q / np.where(shrinking, -direction, 1.0), np.inf), axis=1)
    t = np.minimum(1.0, limit)
    fallback = ~(np.isfinite(slope) & (slope > 0) & np.all(np.isfinite(direction), axis=1))

    out = q.copy()
    pending = np.flatnonzero(~fallback)
    for _ in range(MAX_BACKTRACKS):
        if not pending.size:
            break
        trial = q[pending] + t[pending, None] * direction[pending]
        trial = np.where(trial > ROUNDOFF * 0.1, trial, 0.0)
        trial /= trial.sum(axis=1, keepdims=True)
        _, _, trial_value = _evaluate(P[pending], kernel[pending], trial)
        target = value[pending] - ARMIJO * t[pending] * slope[pending]
        accept = trial_value <= target + ROUNDOFF * np.maximum(1.0, np.abs(value[pending]))
        out[pending[accept]] = trial[accept]
        pending = pending[~accept]
        t[pending] *= 0.5
    fallback[pending] = True

    if fallback.any():
        step = q[fallback] * g[fallback]
        out[fallback] = step / step.sum(axis=1, keepdims=True)
    return out


def _newton(
    P: np.ndarray, kernel: np.ndarray, q: np.ndarray, gap: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Active-set Newton polish of the rows alternating minimization left uncertified."""
    rows = np.flatnonzero(gap > config.GAP_TOL)
    polish = q[rows]
    polish = np.where(polish < DROP_TOL, 0.0, polish)
    q[rows] = polish / polish.sum(axis=1, keepdims=True)
    for iteration in range(config.NEWTON_MAX_ITER + 1):
        if not rows.size:
            break
        p, k, qr = P[rows], kernel[rows], q[rows]
        c, g, value = _evaluate(p, k, qr)
        gap[rows] = _certificate(g, value)
        keep = gap[rows] > config.GAP_TOL
        if iteration == config.NEWTON_MAX_ITER or not keep.any():
            break
        rows, p, k, qr, c, g, value = rows[keep], p[keep], k[keep], qr[keep], c[keep], g[keep], value[keep]

        support = qr > 0
        residual = np.max(np.where(support, np.abs(g - 1.0), 0.0), axis=1)
        outside = np.where(support, -np.inf, g)
        enter = outside.max(axis=1) - 1.0 > 2.0 * residual
        if enter.any():
            y = np.argmax(outside[enter], axis=1)
            mixed = (1.0 - ENTER_MIX) * qr[enter]
            mixed[np.arange(len(y)), y] += ENTER_MIX
            q[rows[enter]] = mixed
        move = ~enter
        if move.any():
            q[rows[move]] = _newton_step(p[move], k[move], qr[move], c[move], g[move], value[move])
    return q, gap


def _minimize(P: np.ndarray, kernel: np.ndarray, q0: np.ndarray, context: str) -> Tuple[np.ndarray, np.ndarray]:
    q, gap = _alternate(P, kernel, np.array(q0, dtype=float))
    if np.any(gap > config.GAP_TOL):
        q, gap = _newton(P, kernel, q, gap)
    if np.any(gap > config.GAP_TOL):
        residual = float(np.max(gap))
        logger.warning(
            "Lagrangian minimization was not certified",
            extra={
                "context": context,
                "residual": residual,
                "ba_max_iter": config.BA_MAX_ITER,
                "newton_max_iter": config.NEWTON_MAX_ITER,
            },
        )
        raise RateConvergenceError(f"Lagrangian minimization did not converge ({context})", residual)
    return q, gap


def _channels(kernel: np.ndarray, q: np.ndarray, fallback: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    joint = kernel * q[:, None, :]
    c = joint.sum(axis=2)
    W = np.divide(
        joint,
        c[:, :, None],
        out=np.broadcast_to(fallback, joint.shape).copy(),
        where=c[:, :, None] > 0,
    )
    return W, c


def _tilt(P, lam, D, rho, log_m, fallback, start, context) -> _Tilt:
    kernel = _kernel(lam, rho, log_m)
    q, gap = _minimize(P, kernel, start, context)
    W, c = _channels(kernel, q, fallback)
    with np.errstate(divide="ignore"):
        phi = -xlogy(P, c).sum(axis=1)
    return _Tilt(
        q=q,
        channels=W,
        c=c,
        distortions=np.einsum("bx,bxy,xy->b", P, W, rho),
        objectives=information.objective_many(P, W, log_m),
        lower=phi - gap - lam * D,
    )


def _free_solution(P: np.ndarray, rho: np.ndarray, m: np.ndarray):
    """Zero-slope optimum: a constant channel onto the lightest, least distorting symbol."""
    rows = np.arange(len(P))
    lightest = m <= m.min() * (1.0 + 1e-12)
    masked = np.where(lightest[None, :], P @ rho, np.inf)
    target = np.argmin(masked, axis=1)
    W = np.zeros((len(P),) + rho.shape)
    W[rows[:, None], np.arange(rho.shape[0])[None, :], target[:, None]] = 1.0
    return W, masked[rows, target], np.log(m[target])


def _solve_support(P: np.ndarray, rho: np.ndarray, log_m: np.ndarray, fallback: np.ndarray):
    """lam = infinity: R(0) = min Phi over the zero-distortion kernel, certified by the same gap."""
    kernel = _support_kernel(len(P), rho, log_m)
    q0 = np.full((len(P), rho.shape[1]), 1.0 / rho.shape[1])
    q, _ = _minimize(P, kernel, q0, "D=0")
    return _channels(kernel, q, fallback)


def _mixture(P, D, lo_W, hi_W, lo_d, hi_d, log_m) -> Tuple[np.ndarray, np.ndarray]:
    """Convex mixture of the bracketing channels with distortion exactly D, and its value."""
    span = lo_d - hi_d
    theta = np.where(span > 0, np.clip((D - hi_d) / np.where(span > 0, span, 1.0), 0.0, 1.0), 0.0)
    W = theta[:, None, None] * lo_W + (1.0 - theta[:, None, None]) * hi_W
    return W, information.objective_many(P, W, log_m)


def _solve_tilted(P, D, rho, log_m, fallback, free_W, free_d, free_values):
    """Bracket the slope, then search it until the mixed channel is certified optimal."""
    batch, n_rep = len(P), rho.shape[1]
    lo_lam = np.zeros(batch)
    lo_W, lo_d = free_W.copy(), free_d.copy()
    lower = free_values.copy()
    hi_lam = np.ones(batch)
    hi_q = np.full((batch, n_rep), 1.0 / n_rep)
    hi_W = np.empty_like(free_W)
    hi_d = np.empty(batch)
    hi_c = np.empty(P.shape)

    start = hi_q.copy()
    pending = np.arange(batch)
    for _ in range(MAX_BRACKET_STEPS):
        tilt = _tilt(P[pending], hi_lam[pending], D, rho, log_m, fallback, start[pending], f"D={D!r}, bracketing")
        lower[pending] = np.maximum(lower[pending], tilt.lower)
        feasible = tilt.distortions <= D
        done, todo = pending[feasible], pending[~feasible]
        hi_q[done], hi_W[done], hi_d[done], hi_c[done] = (
            tilt.q[feasible], tilt.channels[feasible], tilt.distortions[feasible], tilt.c[feasible]
        )
        lo_lam[todo], lo_W[todo], lo_d[todo] = hi_lam[todo], tilt.channels[~feasible], tilt.distortions[~feasible]
        start[todo] = _warm(tilt.q[~feasible])
        hi_lam[todo] *= LAMBDA_GROWTH
        pending = todo
        if not pending.size:
            break
    else:
        raise RateConvergenceError(f"could not bracket the slope at D={D!r}", float(np.max(lo_d[pending] - D)))

    bisect = np.zeros(batch, dtype=bool)
    active = np.arange(batch)
    for _ in range(MAX_SLOPE_STEPS):
        _, upper = _mixture(P[active], D, lo_W[active], hi_W[active], lo_d[active], hi_d[active], log_m)
        active = active[upper - lower[active] > config.RATE_TOL]
        if not active.size:
            break
        lo, hi = lo_lam[active], hi_lam[active]
        width = hi - lo
        span = lo_d[active] - hi_d[active]
        secant = lo + width * np.divide(lo_d[active] - D, span, out=np.full(len(active), 0.5), where=span > 0)
        secant = np.clip(secant, lo + SECANT_GUARD * width, hi - SECANT_GUARD * width)
        mid = np.where(bisect[active], 0.5 * (lo + hi), secant)

        tilt = _tilt(P[active], mid, D, rho, log_m, fallback, _warm(hi_q[active]), f"D={D!r}, slope search")
        lower[active] = np.maximum(lower[active], tilt.lower)
        feasible = tilt.distortions <= D
        up, down = active[feasible], active[~feasible]
        hi_lam[up], hi_q[up], hi_W[up], hi_d[up], hi_c[up] = (
            mid[feasible], tilt.q[feasible], tilt.channels[feasible], tilt.distortions[feasible], tilt.c[feasible]
        )
        lo_lam[down], lo_W[down], lo_d[down] = mid[~feasible], tilt.channels[~feasible], tilt.distortions[~feasible]
        bisect[active] = hi_lam[active] - lo_lam[active] > 0.5 * width

    W, values = _mixture(P, D, lo_W, hi_W, lo_d, hi_d, log_m)
    excess = values - lower
    if np.any(excess > config.RATE_TOL):
        residual = float(np.max(excess))
        logger.warning("Slope search was not certified", extra={"D": D, "residual": residual})
        raise RateConvergenceError(f"slope search did not certify the rate at D={D!r}", residual)
    return W, values, hi_lam, hi_c


def rate_many(model: Model, D: float, sources: Optional[Any] = None) -> RateBatch:
    """
    Evaluate R(D;Q,M) for every row Q of `sources` (default: the model's P).

    Args:
        model: Validated model supplying M and rho
        D: Distortion level, finite and >= 0
        sources: Array of shape (B, |A|) of source laws; zeros are allowed

    Returns:
        RateBatch with values, optimal channels, slopes and dR/dQ gradients

    Raises:
        ValueError: If D or the source batch is malformed
        RateConvergenceError: If a minimization or the slope search is not certified
    """
    D = float(D)
    if not math.isfinite(D) or D < 0:
        raise ValueError(f"distortion level must be finite and nonnegative, got {D!r}")
    P = model.p[None, :] if sources is None else np.atleast_2d(np.asarray(sources, dtype=float))
    if P.ndim != 2 or P.shape[1] != model.source.size:
        raise ValueError(f"dimension mismatch: sources have shape {P.shape}, alphabet has {model.source.size} symbols")

    rho, m, log_m = model.distortion, model.m, model.log_m
    fallback = fallback_rows(rho)

    W, d_free, values = _free_solution(P, rho, m)
    lam = np.zeros(len(P))
    gradients = np.zeros(P.shape) + values[:, None]
    rest = np.flatnonzero(d_free > D)
    if rest.size:
        if D == 0.0:
            W_rest, c = _solve_support(P[rest], rho, log_m, fallback)
            values_rest = information.objective_many(P[rest], W_rest, log_m)
            lam[rest] = np.inf
        else:
            W_rest, values_rest, lam_rest, c = _solve_tilted(
                P[rest], D, rho, log_m, fallback, W[rest], d_free[rest], values[rest]
            )
            lam[rest] = lam_rest
        W[rest] = W_rest
        values[rest] = values_rest
        gradients[rest] = -np.log(np.maximum(c, TINY))

    distortions = np.einsum("bx,bxy,xy->b", P, W, rho)
    logger.debug(
        "Solved rate batch",
        extra={"D": D, "batch": len(P), "tilted": int(rest.size), "digest": model.digest},
    )
    return RateBatch(
        D=D,
        sources=P,
        values=values,
        channels=W,
        output_laws=np.einsum("bx,bxy->by", P, W),
        lam=lam,
        distortions=distortions,
        gradients=gradients,
    )


def rate(model: Model, D: float) -> RatePoint:
    return rate_many(model, D).point(model)


def rate_at_zero(model: Model) -> RatePoint:
    """R(0;P,M) by alternating minimization restricted to zero-distortion pairs."""
    rho, log_m = model.distortion, model.log_m
    fallback = fallback_rows(rho)
    P = model.p[None, :]
    W, c = _solve_support(P, rho, log_m, fallback)
    batch = RateBatch(
        D=0.0,
        sources=P,
        values=information.objective_many(P, W, log_m),
        channels=W,
        output_laws=np.einsum("bx,bxy->by", P, W),
        lam=np.array([np.inf]),
        distortions=np.einsum("bx,bxy,xy->b", P, W, rho),
        gradients=-np.log(np.maximum(c, TINY)),
    )
    return batch.point(model)


def rate_curve(model: Model, D_grid: Iterable[float]) -> RateCurve:
    """R(D) along a sorted grid; nonincreasing and convex shape is verified."""
    grid = [float(D) for D in D_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("distortion grid must be sorted ascending")
    points = parallel_map(lambda D: rate(model, D), grid)

    values = [point.rate_nats for point in points]
    for i in range(len(values) - 1):
        if values[i + 1] > values[i] + CURVE_TOL:
            raise RateConvergenceError(
                f"rate curve increases between D={grid[i]!r} and D={grid[i + 1]!r}", values[i + 1] - values[i]
            )
    for i in range(len(values) - 2):
        span = grid[i + 2] - grid[i]
        if span <= 0:
            continue
        chord = values[i] + (values[i + 2] - values[i]) * (grid[i + 1] - grid[i]) / span
        if values[i + 1] > chord + CURVE_TOL:
            raise RateConvergenceError(f"rate curve is not convex at D={grid[i + 1]!r}", values[i + 1] - chord)
    return RateCurve(model_digest=model.digest, points=points)


def _oracle_mesh(n_source: int, n_rep: int, mesh: int) -> int:
    while mesh > 1 and math.comb(mesh + n_rep - 1, n_rep - 1) ** n_source > config.ORACLE_POINTS:
        mesh = max(1, int(mesh * 0.8))
    return mesh


def rate_oracle(model: Model, D: float, mesh: int) -> float:
    """
    Brute-force R(D;P,M) over a mesh of row-stochastic channels, polished by SLSQP.

    Independent of the alternating-minimization path; used to cross-check it.
    The mesh is coarsened when the channel grid would exceed ORACLE_POINTS.
    """
    n_source, n_rep = model.source.size, model.reproduction.size
    if n_source * n_rep > 9:
        raise CapExceededError(f"oracle limited to |A|*|Â| <= 9, got {n_source * n_rep}")
    if mesh < 10:
        raise ValueError("oracle mesh must be at least 10")
    D = float(D)
    if not math.isfinite(D) or D < 0:
        raise ValueError(f"distortion level must be finite and nonnegative, got {D!r}")

    effective = _oracle_mesh(n_source, n_rep, mesh)
    if effective != mesh:
        logger.info("Coarsened oracle mesh", extra={"requested": mesh, "used": effective})
    rows = simplex_mesh(n_rep, effective)
    index = np.indices((len(rows),) * n_source).reshape(n_source, -1).T
    W = rows[index]

    p, rho, log_m = model.p, model.distortion, model.log_m
    P = np.broadcast_to(p, (len(W), n_source))
    feasible = np.einsum("x,bxy,xy->b", p, W, rho) <= D + config.PROB_TOL
    values = np.where(feasible, information.objective_many(P, W, log_m), np.inf)
    best = int(np.argmin(values))
    result = float(values[best])

    cost = (p[:, None] * rho).ravel()

    def objective(x: np.ndarray):
        w = np.clip(x.reshape(n_source, n_rep), 0.0, None)
        output = p @ w
        value = information.objective_many(p[None], w[None], log_m)[0]
        ratio = np.log(np.maximum(w, TINY)) - np.log(np.maximum(output, TINY))[None, :]
        return float(value), (p[:, None] * (ratio + log_m[None, :])).ravel()

    row_sums = np.kron(np.eye(n_source), np.ones(n_rep))
    constraints = [
        {"type": "eq", "fun": lambda x: row_sums @ x - 1.0, "jac": lambda x: row_sums},
        {"type": "ineq", "fun": lambda x: np.array([D - cost @ x]), "jac": lambda x: -cost[None, :]},
    ]
    start = (1.0 - 1e-3) * W[best] + 1e-3 * fallback_rows(rho)
    polished = optimize.minimize(
        objective,
        start.ravel(),
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * (n_source * n_rep),
        constraints=constraints,
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    w = np.clip(polished.x.reshape(n_source, n_rep), 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    if p @ (w * rho).sum(axis=1) <= D + config.FEASIBILITY_SLACK:
        result = min(result, information.objective(p, w, model.m))
    return result


def lipschitz_estimate(model: Model, D: float, eps: float = 1e-3, directions: int = 8, seed: int = 0) -> float:
    """Largest observed |R(D;Q) - R(D;P)| / TV(Q, P) over random perturbations of size eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if directions < 1:
        raise ValueError("directions must be positive")
    rng = np.random.default_rng(seed)
    p = model.p
    shifts = []
    for _ in range(directions):
        z = rng.standard_normal(p.size)
        z -= z.mean()
        z *= eps / (0.5 * np.abs(z).sum())
        negative = (p + z) < 0
        if negative.any():
            z *= 0.99 * np.min(p[negative] / -z[negative])
        shifts.append(z)
    shifts = np.array(shifts)
    batch = rate_many(model, D, np.vstack([p[None, :], p[None, :] + shifts]))
    tv = 0.5 * np.abs(shifts).sum(axis=1)
    return float(np.max(np.abs(batch.values[1:] - batch.values[0]) / tv))

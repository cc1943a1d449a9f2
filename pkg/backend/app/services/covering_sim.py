"""
Finite-n covering experiments.

Builds codebooks of reproduction strings under a mass budget exp(nR) and
measures, by exact enumeration of every source string, the probability that
a P-i.i.d. string is not within per-letter distortion D of the codebook.
"""
import hashlib
import logging
import math
import threading
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from ..core import config
from ..core.errors import CapExceededError, CodebookStarvationError, ModelValidationError
from ..core.executor import parallel_map
from ..schemas.model import Model, Word
from ..schemas.results import CoverReport, SweepReport
from .rate_solver import RateBatch, rate_many

logger = logging.getLogger(__name__)

COVER_SLACK = 1e-12
FLAG_MARGIN = 0.1
DEFAULT_CAP = 2**config.DEFAULT_MAX_N
GENERATORS = ("type-covering", "greedy", "hamming-ball")

_rate_cache: Dict[Tuple[str, int, float], RateBatch] = {}
_cache_lock = threading.Lock()


class Codebook:
    """
    A set of distinct reproduction strings of a fixed length.

    Keeps the log-mass log M^n(C) = logsumexp of per-word log masses up to
    date as words are added.

    Attributes:
        n: Word length
        generator: Name of the construction that produced the codebook
    """

    def __init__(self, model: Model, n: int, words: Iterable[Word] = (), generator: str = "manual"):
        if n < 1:
            raise ValueError("word length must be positive")
        self.n = n
        self.generator = generator
        self._alphabet = model.reproduction
        self._log_m = model.log_m
        self._words: List[tuple] = []
        self._seen: set = set()
        self._word_log_mass: List[float] = []
        self._log_total = -np.inf
        for word in words:
            self.add(word)

    def __len__(self) -> int:
        return len(self._words)

    def word_log_mass(self, word: Word) -> float:
        indices = self._alphabet.encode(word)
        return float(self._log_m[indices].sum())

    def add(self, word: Word) -> bool:
        """Insert a word; returns False if it was already present."""
        indices = self._alphabet.encode(word)
        if indices.size != self.n:
            raise ValueError(f"word length {indices.size} does not match codebook length {self.n}")
        key = tuple(int(i) for i in indices)
        if key in self._seen:
            return False
        log_mass = float(self._log_m[indices].sum())
        self._seen.add(key)
        self._words.append(key)
        self._word_log_mass.append(log_mass)
        self._log_total = float(np.logaddexp(self._log_total, log_mass))
        return True

    @property
    def log_total(self) -> float:
        return self._log_total

    @property
    def mass_log(self) -> float:
        """(1/n) log M^n(C); -inf for an empty codebook."""
        return self._log_total / self.n

    @property
    def words(self) -> np.ndarray:
        if not self._words:
            return np.zeros((0, self.n), dtype=np.intp)
        return np.array(self._words, dtype=np.intp)

    @property
    def strings(self) -> List[str]:
        return [self._alphabet.decode(word) for word in self._words]

    def verify(self) -> float:
        """Recompute the log-mass from scratch and check the running value."""
        if not self._words:
            return -np.inf
        exact = float(logsumexp(self._word_log_mass))
        if abs(exact - self._log_total) > 1e-12 * max(1.0, abs(exact)):
            raise AssertionError(f"running log-mass {self._log_total!r} drifted from {exact!r}")
        self._log_total = exact
        return exact / self.n

    def digest(self) -> str:
        body = "\n".join(",".join(str(i) for i in word) for word in sorted(self._words))
        return hashlib.sha256(f"{self.n}|{body}".encode("utf-8")).hexdigest()[:16]


def _generator(seed: int, n: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, n, trial])))


def _check_enumeration(size: int, n: int, cap: Optional[int]) -> None:
    limit = config.ENUM_CAP if cap is None else min(int(cap), config.ENUM_CAP)
    count = size**n
    if count > limit:
        raise CapExceededError(f"|A|^n = {size}^{n} = {count} exceeds the enumeration cap {limit}")


def all_words(size: int, n: int) -> np.ndarray:
    """Every string of length n over {0..size-1}, lexicographic, shape (size^n, n)."""
    index = np.arange(size**n)
    powers = size ** np.arange(n - 1, -1, -1)
    return (index[:, None] // powers[None, :]) % size


def _distortion_table(X: np.ndarray, Y: np.ndarray, rho: np.ndarray) -> np.ndarray:
    total = np.zeros((len(X), len(Y)))
    for i in range(X.shape[1]):
        total += rho[X[:, i][:, None], Y[:, i][None, :]]
    return total / X.shape[1]


def _min_distortion(X: np.ndarray, Y: np.ndarray, rho: np.ndarray) -> np.ndarray:
    best = np.full(len(X), np.inf)
    if not len(Y):
        return best
    block = max(1, 2**22 // max(1, len(X)))
    for start in range(0, len(Y), block):
        best = np.minimum(best, _distortion_table(X, Y[start : start + block], rho).min(axis=1))
    return best


def _atoms(p: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.exp(np.log(p)[X].sum(axis=1))


def blowup_error(
    model: Model,
    codebook: Codebook,
    D: float,
    cap: Optional[int] = None,
    R: Optional[float] = None,
    seed: Optional[int] = None,
) -> CoverReport:
    """
    Exact P^n-probability that a source string is farther than D from the codebook.

    Args:
        model: Model whose P drives the source
        codebook: Codebook built for the same reproduction alphabet
        D: Per-letter distortion level
        cap: Largest |A|^n to enumerate (default 2^DEFAULT_MAX_N, never above ENUM_CAP)
        R: Rate budget the codebook was built for, reported back
        seed: Seed the codebook was built with, reported back

    Returns:
        CoverReport with the error probability, its exponent and E[Z_n]
    """
    n = codebook.n
    _check_enumeration(model.source.size, n, DEFAULT_CAP if cap is None else cap)
    X = all_words(model.source.size, n)
    z = _min_distortion(X, codebook.words, model.distortion)
    atoms = _atoms(model.p, X)
    covered = z <= float(D) + COVER_SLACK
    error = min(max(math.fsum(atoms[~covered]), 0.0), 1.0)
    mean_min = math.fsum(atoms * z) if np.all(np.isfinite(z)) else float("inf")
    return CoverReport(
        n=n,
        D=float(D),
        R_nats=R,
        mass_log=codebook.mass_log,
        error_prob=error,
        empirical_exponent=-math.log(error) / n if error > 0 else float("inf"),
        mean_min_distortion=mean_min,
        codebook_size=len(codebook),
        codebook_digest=codebook.digest(),
        seed=seed,
        generator=codebook.generator,
        source=[float(v) for v in model.p],
    )


def _compositions(words: np.ndarray, size: int) -> np.ndarray:
    return np.stack([(words == a).sum(axis=1) for a in range(size)], axis=1)


def type_classes(size: int, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Every string of length n with its type class.

    Returns:
        (words, types, index): words as in all_words, the distinct symbol
        counts of shape (T, size) in lexicographic order, and the type index
        of each word
    """
    words = all_words(size, n)
    types, index = np.unique(_compositions(words, size), axis=0, return_inverse=True)
    return words, types, index.reshape(-1)


def _type_rates(model: Model, n: int, D: float, types: np.ndarray):
    key = (model.digest, n, float(D))
    with _cache_lock:
        cached = _rate_cache.get(key)
    if cached is None:
        cached = rate_many(model, D, types / n)
        with _cache_lock:
            _rate_cache[key] = cached
    return cached


def type_covering_codebook(
    model: Model,
    n: int,
    R: float,
    D: float,
    seed: int,
    trial: int = 0,
    typicality: float = 1.0,
    margin: float = 0.01,
    candidates: int = 256,
    rounds: int = 3,
) -> Codebook:
    """
    Cover source type classes one at a time under the mass budget exp(nR).

    Type classes T_Q with R(D;Q,M) <= R are visited in order of increasing
    R(D;Q,M). For each, strings are drawn i.i.d. from the reproduction law of
    the optimal channel for Q and kept if their type is within
    typicality/sqrt(n) of it in total variation; among those that fit the
    budget, the one covering the most still-uncovered strings of T_Q per unit
    mass is added until T_Q is covered or no candidate helps. Building stops
    once the mass rate reaches R - margin. Only M, rho, D and R are consulted,
    never P. Deterministic for a given (seed, n, trial).

    Raises:
        CodebookStarvationError: If no type class qualifies or no word could be added
    """
    if n < 1:
        raise ValueError("word length must be positive")
    _check_enumeration(model.source.size, n, DEFAULT_CAP)
    X, types, index = type_classes(model.source.size, n)
    batch = _type_rates(model, n, D, types)
    eligible = np.flatnonzero(batch.values <= R + COVER_SLACK)
    order = eligible[np.argsort(batch.values[eligible], kind="stable")]

    rho, log_m, size = model.distortion, model.log_m, model.reproduction.size
    level = float(D) + COVER_SLACK
    radius = typicality / math.sqrt(n)
    budget = n * R + COVER_SLACK
    stop_at = n * (R - margin)
    lightest = n * float(log_m.min())

    rng = _generator(seed, n, trial)
    codebook = Codebook(model, n, generator="type-covering")
    covered = np.zeros(len(X), dtype=bool)
    draws = typical = 0
    for t in order:
        if codebook.log_total >= stop_at or np.logaddexp(codebook.log_total, lightest) > budget:
            break
        target = np.clip(batch.output_laws[t], 0.0, None)
        target /= target.sum()
        members = np.flatnonzero((index == t) & ~covered)
        for _ in range(rounds):
            if not members.size or codebook.log_total >= stop_at:
                break
            words = rng.choice(size, size=(candidates, n), p=target)
            draws += candidates
            near = 0.5 * np.abs(_compositions(words, size) / n - target[None, :]).sum(axis=1) <= radius + COVER_SLACK
            typical += int(near.sum())
            if not near.any():
                continue
            words = np.unique(words[near], axis=0)
            masses = log_m[words].sum(axis=1)
            affordable = np.logaddexp(codebook.log_total, masses) <= budget
            words, masses = words[affordable], masses[affordable]
            if not len(words):
                continue
            balls = _distortion_table(X[members], words, rho) <= level
            while codebook.log_total < stop_at:
                gains = (~covered[members]).astype(float) @ balls
                fits = (gains > 0) & (np.logaddexp(codebook.log_total, masses) <= budget)
                if not fits.any():
                    break
                best = int(np.argmax(np.where(fits, np.log(np.maximum(gains, 1.0)) - masses, -np.inf)))
                codebook.add(words[best])
                covered |= _min_distortion(X, words[best][None, :], rho) <= level
            members = members[~covered[members]]

    stats: Dict[str, Any] = {
        "n": n,
        "trial": trial,
        "types": int(len(types)),
        "eligible": int(eligible.size),
        "draws": draws,
        "typical": typical,
        "size": len(codebook),
    }
    if not eligible.size:
        raise CodebookStarvationError("no type class has R(D;Q,M) <= R", stats)
    if not len(codebook):
        raise CodebookStarvationError("no typical string fits the mass budget", stats)
    logger.debug("Built type-covering codebook", extra=stats)
    codebook.verify()
    return codebook


def error_floor(model: Model, n: int, R: float, D: float) -> float:
    """
    Lower bound on the error probability of every codebook with M^n(C) <= exp(nR).

    Linear-programming relaxation over type classes: x_T counts the words
    of reproduction type T (at most |T|), c_S the covered strings of source
    type S (at most |S|), every word of type T covers at most N(T,S) strings
    of S, and the total mass is at most exp(nR). Solved with HiGHS.
    """
    n_source, n_rep = model.source.size, model.reproduction.size
    _check_enumeration(n_source, n, DEFAULT_CAP)
    _check_enumeration(n_rep, n, DEFAULT_CAP)
    X, source_types, source_index = type_classes(n_source, n)
    Y, rep_types, rep_index = type_classes(n_rep, n)
    source_sizes = np.bincount(source_index, minlength=len(source_types))
    rep_sizes = np.bincount(rep_index, minlength=len(rep_types))

    representatives = Y[np.array([np.flatnonzero(rep_index == t)[0] for t in range(len(rep_types))])]
    within = _distortion_table(X, representatives, model.distortion) <= float(D) + COVER_SLACK
    reach = np.stack(
        [np.bincount(source_index, weights=within[:, t], minlength=len(source_types)) for t in range(len(rep_types))]
    )

    atoms = np.exp(source_types @ np.log(model.p))
    word_mass = np.exp(rep_types @ model.log_m - n * R)
    n_rep_types, n_source_types = len(rep_types), len(source_types)
    objective = np.concatenate([np.zeros(n_rep_types), -atoms])
    coverage = np.hstack([-reach.T, np.eye(n_source_types)])
    mass = np.concatenate([word_mass, np.zeros(n_source_types)])[None, :]
    found = optimize.linprog(
        objective,
        A_ub=np.vstack([coverage, mass]),
        b_ub=np.concatenate([np.zeros(n_source_types), [1.0]]),
        bounds=list(zip(np.zeros(n_rep_types + n_source_types), np.concatenate([rep_sizes, source_sizes]))),
        method="highs",
    )
    if found.status != 0:
        logger.warning("Error floor LP failed; reporting the trivial bound", extra={"n": n, "message": found.message})
        return 0.0
    floor = min(max(1.0 + float(found.fun), 0.0), 1.0)
    logger.debug("Computed error floor", extra={"n": n, "R": R, "D": D, "floor": floor})
    return floor


def greedy_codebook(model: Model, n: int, R: float, D: float) -> Codebook:
    """Repeatedly add the affordable string that covers the most uncovered probability."""
    n_source, n_rep = model.source.size, model.reproduction.size
    if n_source**n > config.GREEDY_CAP or n_rep**n > config.GREEDY_CAP:
        raise CapExceededError(f"greedy construction limited to {config.GREEDY_CAP} strings per side")
    X, Y = all_words(n_source, n), all_words(n_rep, n)
    balls = _distortion_table(X, Y, model.distortion) <= float(D) + COVER_SLACK
    atoms = _atoms(model.p, X)
    log_mass = model.log_m[Y].sum(axis=1)
    budget = n * R + COVER_SLACK

    codebook = Codebook(model, n, generator="greedy")
    uncovered = np.ones(len(X), dtype=bool)
    available = np.ones(len(Y), dtype=bool)
    while True:
        gains = (atoms * uncovered) @ balls
        fits = available & (np.logaddexp(codebook.log_total, log_mass) <= budget)
        if not fits.any():
            break
        scored = np.where(fits, gains, -1.0)
        best = int(np.argmax(scored))
        if scored[best] <= 0:
            break
        codebook.add(Y[best])
        available[best] = False
        uncovered &= ~balls[:, best]
    return codebook


def hamming_ball_codebook(model: Model, n: int, R: float, center: Optional[Word] = None) -> Codebook:
    """Reproduction strings in order of Hamming distance from `center`, while the budget allows."""
    n_rep = model.reproduction.size
    _check_enumeration(n_rep, n, DEFAULT_CAP)
    origin = np.zeros(n, dtype=np.intp) if center is None else model.reproduction.encode(center)
    if origin.size != n:
        raise ValueError("center length does not match n")
    Y = all_words(n_rep, n)
    order = np.argsort((Y != origin[None, :]).sum(axis=1), kind="stable")
    budget = n * R + COVER_SLACK
    codebook = Codebook(model, n, generator="hamming-ball")
    for index in order:
        mass = codebook.word_log_mass(Y[index])
        if np.logaddexp(codebook.log_total, mass) > budget:
            break
        codebook.add(Y[index])
    return codebook


def exhaustive_optimum(model: Model, n: int, R: float, D: float) -> CoverReport:
    """
    Minimum error probability over every codebook with log-mass at most nR.

    Subset dynamic program over the 2^K candidate codebooks (K = |Â|^n <= 20):
    coverage sets are packed into uint64 bitmasks and masses accumulate in
    the same pass. Ties go to the subset with the lowest bit pattern.
    """
    K = model.reproduction.size**n
    if K > config.EXHAUSTIVE_CAP:
        raise CapExceededError(f"|Â|^n = {K} exceeds the exhaustive cap {config.EXHAUSTIVE_CAP}")
    _check_enumeration(model.source.size, n, DEFAULT_CAP)
    X, Y = all_words(model.source.size, n), all_words(model.reproduction.size, n)
    balls = _distortion_table(X, Y, model.distortion) <= float(D) + COVER_SLACK
    atoms = _atoms(model.p, X)
    masses = np.exp(model.log_m[Y].sum(axis=1))

    words = (len(X) + 63) // 64
    ball_bits = np.zeros((K, words), dtype=np.uint64)
    for k in range(K):
        for j in np.flatnonzero(balls[:, k]):
            ball_bits[k, j // 64] |= np.uint64(1) << np.uint64(j % 64)

    cover = np.zeros((1 << K, words), dtype=np.uint64)
    total_mass = np.zeros(1 << K)
    for k in range(K):
        half = 1 << k
        cover[half : 2 * half] = cover[:half] | ball_bits[k]
        total_mass[half : 2 * half] = total_mass[:half] + masses[k]

    padded = np.zeros(words * 64)
    padded[: len(atoms)] = atoms
    bit_table = (np.arange(256)[:, None] >> np.arange(8)[None, :]) & 1
    covered = np.zeros(1 << K)
    for w in range(words):
        for b in range(8):
            table = bit_table @ padded[w * 64 + b * 8 : w * 64 + b * 8 + 8]
            chunk = (cover[:, w] >> np.uint64(8 * b)) & np.uint64(255)
            covered += table[chunk.astype(np.intp)]

    feasible = total_mass <= math.exp(n * R) * (1.0 + 1e-12)
    best = int(np.argmin(np.where(feasible, 1.0 - covered, np.inf)))
    chosen = [Y[k] for k in range(K) if best >> k & 1]
    codebook = Codebook(model, n, chosen, generator="exhaustive")
    logger.debug("Exhaustive optimum", extra={"n": n, "subset": best, "size": len(chosen)})
    return blowup_error(model, codebook, D, R=R)


def _build(model: Model, generator: str, n: int, R: float, D: float, seed: int, trial: int, typicality: float):
    if generator == "type-covering":
        return type_covering_codebook(model, n, R, D, seed, trial=trial, typicality=typicality)
    if generator == "greedy":
        return greedy_codebook(model, n, R, D)
    if generator == "hamming-ball":
        return hamming_ball_codebook(model, n, R)
    raise ValueError(f"unknown generator {generator!r}; expected one of {', '.join(GENERATORS)}")


def empirical_exponent_sweep(
    model: Model,
    n_list: Sequence[int],
    R: float,
    D: float,
    trials: int,
    seed: int,
    generator: str = "type-covering",
    typicality: float = 1.0,
    theory_exponent: Optional[float] = None,
) -> SweepReport:
    """
    Best-of-trials error probability for each n and the fitted exponent slope.

    Reports whose empirical exponent exceeds `theory_exponent` + 0.1 at n >= 10
    are listed in `flagged`; they are not treated as failures.
    `error_floors` carries the error_floor bound for each n, or None when the
    reproduction strings are too many to enumerate.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if generator not in GENERATORS:
        raise ValueError(f"unknown generator {generator!r}; expected one of {', '.join(GENERATORS)}")
    for n in n_list:
        _check_enumeration(model.source.size, n, DEFAULT_CAP)
    runs = trials if generator == "type-covering" else 1
    tasks = [(n, t) for n in n_list for t in range(runs)]

    def run(task):
        n, trial = task
        codebook = _build(model, generator, n, R, D, seed, trial, typicality)
        return blowup_error(model, codebook, D, R=R, seed=seed)

    reports = parallel_map(run, tasks)
    best: List[CoverReport] = []
    for n in n_list:
        group = [report for (m, _), report in zip(tasks, reports) if m == n]
        best.append(min(group, key=lambda report: report.error_prob))

    finite = [(r.n, -math.log(r.error_prob)) for r in best if r.error_prob > 0]
    slope = intercept = float("nan")
    if len(finite) >= 2:
        ns, logs = zip(*finite)
        slope, intercept = (float(v) for v in np.polyfit(ns, logs, 1))

    flagged = []
    if theory_exponent is not None:
        flagged = [
            r.n for r in best if r.n >= 10 and r.empirical_exponent > theory_exponent + FLAG_MARGIN
        ]
        if flagged:
            logger.warning("Empirical exponent above theory", extra={"n": flagged, "theory": theory_exponent})

    floors: List[Optional[float]] = []
    for n in n_list:
        try:
            floors.append(error_floor(model, n, R, D))
        except CapExceededError:
            floors.append(None)
    return SweepReport(
        R_nats=R, D=float(D), reports=best, slope=slope, intercept=intercept,
        theory_exponent=theory_exponent, flagged=flagged, error_floors=floors,
    )


def universality_check(
    model: Model,
    n: int,
    R: float,
    D: float,
    sources: Sequence[Any],
    seed: int = 0,
    trial: int = 0,
    generator: str = "type-covering",
    typicality: float = 1.0,
) -> List[CoverReport]:
    """Error probability of one codebook under several source laws."""
    codebook = _build(model, generator, n, R, D, seed, trial, typicality)
    reports = []
    for law in sources:
        q = np.asarray(law, dtype=float)
        if q.shape != model.p.shape:
            raise ModelValidationError(f"dimension mismatch: source {list(q)} has {q.size} entries")
        if np.any(q <= 0):
            raise ModelValidationError(f"nonpositive P entry at index {int(np.flatnonzero(q <= 0)[0])}")
        if abs(q.sum() - 1.0) > config.PROB_TOL:
            raise ModelValidationError(f"P sums to {float(q.sum())!r}, not 1")
        reports.append(blowup_error(model.with_source(q), codebook, D, R=R, seed=seed))
    return reports

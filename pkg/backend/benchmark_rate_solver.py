"""
Timing of the batched rate solver against one source law per call.

    python benchmark_rate_solver.py
"""
import logging
import time

import numpy as np

from app.core import config
from app.services.model import load_model
from app.services.rate_solver import rate_many

logger = logging.getLogger("spherecover.benchmark")


def random_sources(count: int, size: int, seed: int = 0) -> np.ndarray:
    """Source laws drawn uniformly from the simplex."""
    return np.random.default_rng(seed).dirichlet(np.ones(size), size=count)


def benchmark_batch(model, num_sources: int, D: float = 0.3) -> dict:
    sources = random_sources(num_sources, model.source.size)

    start = time.perf_counter()
    single = np.array([rate_many(model, D, [q]).values[0] for q in sources])
    single_s = time.perf_counter() - start

    start = time.perf_counter()
    batched = rate_many(model, D, sources).values
    batched_s = time.perf_counter() - start

    drift = float(np.max(np.abs(single - batched)))
    if drift > config.RATE_TOL:
        logger.warning("Batched and per-law values disagree", extra={"laws": num_sources, "drift": drift})
    return {"laws": num_sources, "single_ms": single_s * 1000, "batched_ms": batched_s * 1000, "drift": drift}


def main():
    logging.basicConfig(level=config.LOG_LEVEL)
    model = load_model(config.DATA_DIR / "bernoulli.json")
    print(f"{'laws':>6} {'single_ms':>10} {'batched_ms':>11} {'max_drift':>10}")
    for row in (benchmark_batch(model, count) for count in (16, 64, 256, 1024)):
        print(f"{row['laws']:>6} {row['single_ms']:>10.1f} {row['batched_ms']:>11.1f} {row['drift']:>10.1e}")


if __name__ == "__main__":
    main()

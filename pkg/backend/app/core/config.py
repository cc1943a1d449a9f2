import math
import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env if present
load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent
PROJECT_DIR = BASE_DIR.parent
DATA_DIR = PROJECT_DIR / "data"

LN2 = math.log(2.0)


def _int_env(name: str, default: int) -> int:
    return int(float(os.getenv(name, str(default))))


def _float_env(name: str, default: float) -> float:
    return float(os.getenv(name, repr(default)))


THREADS: int = max(1, _int_env("SPHERECOVER_THREADS", os.cpu_count() or 1))
LOG_LEVEL: str = os.getenv("SPHERECOVER_LOG_LEVEL", "WARNING").upper()

# Rate solver certificates (nats) and iteration caps
GAP_TOL: float = _float_env("SPHERECOVER_GAP_TOL", 1e-11)
RATE_TOL: float = _float_env("SPHERECOVER_RATE_TOL", 1e-10)
BA_MAX_ITER: int = _int_env("SPHERECOVER_BA_MAX_ITER", 50)
NEWTON_MAX_ITER: int = _int_env("SPHERECOVER_NEWTON_MAX_ITER", 100)

# Finite-n simulator caps
ENUM_CAP: int = _int_env("SPHERECOVER_ENUM_CAP", 2_000_000)
DEFAULT_MAX_N: int = _int_env("SPHERECOVER_DEFAULT_MAX_N", 14)
EXHAUSTIVE_CAP: int = 20
GREEDY_CAP: int = 4096

ORACLE_POINTS: int = _int_env("SPHERECOVER_ORACLE_POINTS", 250_000)

PROB_TOL: float = 1e-12
FEASIBILITY_SLACK: float = 1e-9
BOUNDARY_TOL: float = 1e-7

"""Exception hierarchy shared by the services and the command line.

Every error carries the process exit code the CLI reports for it.
"""
from typing import Any, Dict, Optional


class SphereCoverError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class UsageError(SphereCoverError, ValueError):
    exit_code = 1


class ModelValidationError(SphereCoverError, ValueError):
    exit_code = 2


class RateConvergenceError(SphereCoverError, RuntimeError):
    exit_code = 3

    def __init__(self, detail: str, residual: float):
        super().__init__(f"{detail} (residual {residual:.3e} nats)")
        self.residual = residual


class CodebookStarvationError(SphereCoverError, RuntimeError):
    exit_code = 3

    def __init__(self, detail: str, stats: Optional[Dict[str, Any]] = None):
        self.stats = dict(stats or {})
        summary = ", ".join(f"{key}={value}" for key, value in self.stats.items())
        super().__init__(f"{detail} [{summary}]" if summary else detail)


class CapExceededError(SphereCoverError, ValueError):
    exit_code = 4

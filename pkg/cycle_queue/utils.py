# cycle_queue/utils.py
"""Shared errors and small helpers used across the package."""

import logging
import os
from typing import Optional

THREADS_ENV = "CYCLEQUEUE_THREADS"

logger = logging.getLogger(__name__)


class CycleQueueError(Exception):
    """Base class for every error raised by cycle_queue."""


class DomainError(CycleQueueError, ValueError):
    """An argument lies outside the operation's domain."""


class NumericError(CycleQueueError, ArithmeticError):
    """A numerical routine did not reach its tolerance."""

    def __init__(self, message: str, estimate: Optional[float] = None, error_bound: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound


class BracketError(NumericError):
    """The function has no sign change over the requested bracket."""


class SimulationCapError(CycleQueueError, RuntimeError):
    """A simulation exceeded its step, event or attempt cap."""


class UnsupportedError(CycleQueueError, NotImplementedError):
    """The request is outside the closed-form path."""


class ReplicateError(CycleQueueError):
    """A Monte Carlo sampler failed; `index` is the failing replicate."""

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"replicate {index} failed: {cause!r}")
        self.index = index
        self.cause = cause


class UsageError(CycleQueueError):
    """Invalid command-line or file configuration."""


def worker_count(default: int = 1) -> int:
    """Worker pool size, capped by the CYCLEQUEUE_THREADS environment variable."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return default
    return max(1, value)


def require(condition: bool, message: str) -> None:
    if not condition:
        raise DomainError(message)

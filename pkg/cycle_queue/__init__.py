# cycle_queue/__init__.py
"""Random permutations grown by the Chinese Restaurant Process, and the infinite-server queues they embed."""

from .utils import (
    BracketError,
    CycleQueueError,
    DomainError,
    NumericError,
    ReplicateError,
    SimulationCapError,
    UnsupportedError,
    UsageError,
)

__all__ = [
    "BracketError",
    "CycleQueueError",
    "DomainError",
    "NumericError",
    "ReplicateError",
    "SimulationCapError",
    "UnsupportedError",
    "UsageError",
]

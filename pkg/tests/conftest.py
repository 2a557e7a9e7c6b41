# tests/conftest.py
import numpy as np
import pytest

SEED = 20240607


@pytest.fixture
def rng():
    """Fresh seeded generator per test."""
    return np.random.default_rng(SEED)


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.delenv("CYCLEQUEUE_THREADS", raising=False)

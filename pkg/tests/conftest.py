"""
Shared pytest fixtures
"""

import os
import sys

import numpy as np
import pytest

# Add the parent directory to the path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ddco.configs.settings import reset_settings
from ddco.core import Dataset
from factories import random_trajectory


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    """Every test starts from the default DDCO_* environment"""
    for name in ("DDCO_JOBS", "DDCO_LOG_LEVEL", "DDCO_LOG_FILE", "DDCO_DEBUG"):
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_dataset(rng):
    """Eight short trajectories with d_s=2, d_a=1"""
    return Dataset.from_trajectories([random_trajectory(rng, T) for T in (3, 4, 5, 6, 3, 4, 5, 6)])

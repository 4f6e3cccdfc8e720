"""
Pytest configuration and fixtures for the private read/write simulator tests
"""
import os
import sys

import numpy as np
import pytest

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Set test environment variables before any imports
os.environ["LOG_LEVEL"] = "ERROR"  # Reduce noise during tests
os.environ["MAX_WORKERS"] = "2"
os.environ["VERIFY_ROUNDS"] = "true"

from config import configure_logging  # noqa: E402
from utils.codec import random_database  # noqa: E402
from utils.params import RawConfig, derive  # noqa: E402

configure_logging("ERROR")


@pytest.fixture
def worked_raw():
    """Worked example: N=8, X=4, T=1, X_delta=1, L=6"""
    return RawConfig(N=8, K=2, X=4, T=1, X_delta=1, K_c=1, xi=1, q=11, seed=7)


@pytest.fixture
def worked_params(worked_raw):
    return derive(worked_raw)


@pytest.fixture
def tiny_raw():
    """Smallest audit configuration"""
    return RawConfig(N=4, K=2, X=2, T=1, X_delta=1, K_c=1, xi=1, q=7, seed=3)


@pytest.fixture
def tiny_params(tiny_raw):
    return derive(tiny_raw)


@pytest.fixture
def wide_params():
    """Two columns per block, so packing across columns is exercised"""
    return derive(RawConfig(N=7, K=3, X=2, T=1, X_delta=1, K_c=2, xi=1, seed=11))


@pytest.fixture
def rng():
    """Seeded generator so every test is reproducible"""
    return np.random.default_rng(20240611)


@pytest.fixture
def worked_db(worked_params, rng):
    return random_database(worked_params, rng)


@pytest.fixture
def tiny_db(tiny_params, rng):
    return random_database(tiny_params, rng)


def _feasible_configs(max_N, K):
    for N in range(3, max_N + 1):
        for T in range(1, N):
            for X in range(T, N - T):
                for K_c in range(1, N - X - T + 1):
                    for X_delta in range(0, X - T + 1):
                        yield RawConfig(N=N, K=K, X=X, T=T, X_delta=X_delta, K_c=K_c, seed=N)


@pytest.fixture
def config_sweep():
    """Every feasible configuration with at most max_N servers"""
    return lambda max_N, K=1: list(_feasible_configs(max_N, K))

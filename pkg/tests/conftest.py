import os
import sys
from pathlib import Path

import numpy as np

# ---------------------------------------------------------------------------
# Test environment isolation: must run before any polyflow imports
# ---------------------------------------------------------------------------

# Ensure src/ is on the path so `polyflow` is importable without installation
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

# Disable Sentry before any app imports so sentry_sdk.init() is skipped.
os.environ.setdefault("PYTEST_CURRENT_TEST", "conftest")
os.environ.setdefault("APP_ENV", "test")
os.environ.setdefault("POLYFLOW_WORKERS", "1")

import pytest  # noqa: E402
from fastapi.testclient import TestClient  # noqa: E402

from polyflow.core.rate_limit import limiter  # noqa: E402
from polyflow.main import app  # noqa: E402
from polyflow.schemas.config import FlowParams, Potential, PotentialKind  # noqa: E402
from polyflow.services.fem.mesh import build_mesh_pair  # noqa: E402


@pytest.fixture
def client() -> TestClient:
    # limiter storage is process-wide; keep tests independent of each other
    limiter.reset()
    yield TestClient(app)
    limiter.reset()


# ---------------------------------------------------------------------------
# Numerical fixtures
# ---------------------------------------------------------------------------


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def hookean() -> Potential:
    return Potential(kind=PotentialKind.hookean)


@pytest.fixture
def fene() -> Potential:
    return Potential(kind=PotentialKind.fene)


@pytest.fixture
def small_mesh():
    """4x4 coarse cells on the unit square: 81 velocity nodes, 25 pressure nodes."""
    return build_mesh_pair(4, 4)


@pytest.fixture
def flow_params() -> FlowParams:
    return FlowParams(Re=1.0, eta_s=1.0, dt=1e-2)

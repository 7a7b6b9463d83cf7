"""
Test configuration and fixtures for KDEXP
"""

import os
import sys
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

# Add packages to path for testing
root_dir = Path(__file__).parent.parent
sys.path.insert(0, str(root_dir))

from packages.engine.core.distributions import RandomSource  # noqa: E402
from packages.engine.core.model import ExposureEnsemble, HealthDataset  # noqa: E402


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests"""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield Path(temp_dir)


@pytest.fixture
def mock_env_vars():
    """Mock environment variables for testing"""
    env_vars = {
        "KDEXP_ENVIRONMENT": "test",
        "KDEXP_THREADS": "1",
        "KDEXP_DEFAULT_SEED": "99",
        "KDEXP_LOG_JSON": "false",
    }

    with patch.dict(os.environ, env_vars):
        yield env_vars


@pytest.fixture
def rng():
    """Fresh seeded random source"""
    return RandomSource.for_stream(12345, "tests")


@pytest.fixture
def toy_dir():
    """Bundled toy inputs"""
    return root_dir / "data" / "toy"


@pytest.fixture
def small_problem():
    """Gaussian outcomes on exposures observed through a noisy ensemble"""
    gen = np.random.default_rng(2024)
    n, m = 30, 25
    z = gen.normal(size=n)
    Z_star = z[:, None] + 0.3 * gen.normal(size=(n, m))
    Y = 0.5 + 1.0 * z + 0.5 * gen.normal(size=n)
    data = HealthDataset.with_intercept(Y, family="gaussian_identity")
    ensemble = ExposureEnsemble.from_matrix(Z_star)
    return data, ensemble, z


# Test markers
pytest.register_assert_rewrite("tests.helpers")


def pytest_configure(config):
    """Configure pytest with custom markers"""
    config.addinivalue_line("markers", "unit: mark test as a unit test")
    config.addinivalue_line("markers", "integration: mark test as an integration test")
    config.addinivalue_line("markers", "slow: mark test as slow running")

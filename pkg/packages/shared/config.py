"""
KDEXP - Shared Configuration Management
Provides unified configuration handling across all packages
"""

import os
from pathlib import Path
from typing import Any, Dict

import psutil
from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()

ENV_PREFIX = "KDEXP_"


class BaseConfig(BaseSettings):
    """Base configuration class with common settings"""

    model_config = SettingsConfigDict(
        env_prefix=ENV_PREFIX,
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Environment
    environment: str = Field(default="development")
    debug: bool = Field(default=False)

    # Paths
    output_dir: Path = Field(default_factory=lambda: Path("./runs"))


class EngineConfig(BaseConfig):
    """Configuration specific to the sampling engine"""

    # Parallelism
    threads: int = Field(default_factory=lambda: psutil.cpu_count(logical=True) or 1)

    # Reproducibility
    default_seed: int = Field(default=20240101)

    # Numerics
    covariance_jitter: float = Field(default=1e-8)
    sj_bisection_steps: int = Field(default=60)
    max_dispersion: int = Field(default=100)

    # Multiple imputation
    mi_failure_fraction: float = Field(default=0.01)
    mi_nongaussian_burn_in: int = Field(default=200)
    mi_nongaussian_thin: int = Field(default=2)


class SimulationConfig(BaseConfig):
    """Configuration specific to the simulation harness"""

    scenario_failure_fraction: float = Field(default=0.02)
    desk_replicates: int = Field(default=50)
    desk_draws: int = Field(default=500)
    full_replicates: int = Field(default=500)
    full_draws: int = Field(default=1000)
    data_points: int = Field(default=250)
    mkde_iterations: int = Field(default=5500)


class SharedConfig(BaseConfig):
    """Shared configuration for all packages"""

    # Logging
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    log_json: bool = Field(default=False)

    # Feature flags
    show_progress: bool = Field(default=True)


# Global configuration instances
base_config = BaseConfig()
engine_config = EngineConfig()
simulation_config = SimulationConfig()
shared_config = SharedConfig()


def get_config(package_name: str) -> BaseConfig:
    """Get configuration for a specific package"""
    configs = {
        "engine": engine_config,
        "simulation": simulation_config,
        "shared": shared_config,
        "base": base_config,
    }
    return configs.get(package_name, base_config)


def get_env_vars() -> Dict[str, Any]:
    """Get all KDEXP environment variables as a dictionary"""
    return {key: value for key, value in os.environ.items() if key.startswith(ENV_PREFIX)}

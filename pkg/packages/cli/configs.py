"""
KDEXP - Run Configuration Documents
Versioned YAML schemas for the fit, simulate and downscale commands
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from packages.engine.core.model import MethodSpec, PriorSpec, SamplerConfig
from packages.shared.config import engine_config
from packages.shared.exceptions import ConfigError
from packages.simulation.study import ScenarioConfig

SCHEMA_VERSION = 1

ConfigT = TypeVar("ConfigT", bound="RunConfig")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1]
    seed: int = Field(default_factory=lambda: engine_config.default_seed)

    def resolve_paths(self, base_dir: Path) -> None:
        for name, value in self:
            if isinstance(value, Path) and not value.is_absolute():
                setattr(self, name, base_dir / value)

    def semantic_payload(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


class GewekeOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frac_first: float = Field(default=0.1, gt=0, lt=1)
    frac_last: float = Field(default=0.5, gt=0, lt=1)


class FitRunConfig(RunConfig):
    ensemble: Path
    dataset: Path
    family: Literal["gaussian_identity", "bernoulli_logit", "negbin_logit"]
    method: MethodSpec
    prior: PriorSpec = Field(default_factory=PriorSpec)
    sampler_preset: Optional[Literal["simulation", "application"]] = None
    sampler: Optional[SamplerConfig] = None
    standardize: Optional[Literal["global_mean_sd", "median_iqr"]] = None
    lag: int = Field(default=0, ge=0)
    mi_draws: Optional[int] = Field(default=None, gt=0)
    geweke: GewekeOptions = Field(default_factory=GewekeOptions)
    output_name: str = "posterior"

    @model_validator(mode="after")
    def one_sampler(self) -> "FitRunConfig":
        if self.sampler is not None and self.sampler_preset is not None:
            raise ValueError("give either sampler or sampler_preset, not both")
        return self

    def sampler_config(self) -> SamplerConfig:
        if self.sampler is not None:
            return self.sampler
        return SamplerConfig.preset(self.sampler_preset or "simulation")


class SimulateRunConfig(RunConfig):
    factorial_grid: bool = False
    full_scale: bool = False
    overrides: Dict[str, Any] = Field(default_factory=dict)
    scenarios: List[ScenarioConfig] = Field(default_factory=list)

    @field_validator("overrides")
    @classmethod
    def known_overrides(cls, overrides: Dict[str, Any]) -> Dict[str, Any]:
        unknown = sorted(set(overrides) - set(ScenarioConfig.model_fields))
        if unknown:
            raise ValueError(f"unknown scenario setting(s): {', '.join(unknown)}")
        try:
            ScenarioConfig(**overrides)
        except ValidationError as exc:
            first = exc.errors()[0]
            raise ValueError(f"{_field_path(first)}: {first['msg']}") from exc
        return overrides

    @model_validator(mode="after")
    def some_scenarios(self) -> "SimulateRunConfig":
        if not self.factorial_grid and not self.scenarios:
            raise ValueError("either set factorial_grid or list scenarios")
        return self


class DownscaleRunConfig(RunConfig):
    observations: Path
    grid: Path
    draws: int = Field(gt=0)
    spline_df: int = Field(default=4, ge=3)
    output_name: str = "ensemble"


def _field_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def load_run_config(path: Union[str, Path], model: Type[ConfigT]) -> ConfigT:
    """Parse and validate a YAML run configuration; paths are relative to the file"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else None
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", field=where) from exc
    if not isinstance(document, dict):
        raise ConfigError("config must be a mapping")
    try:
        config = model.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], field=_field_path(first)) from exc
    config.resolve_paths(path.parent)
    return config

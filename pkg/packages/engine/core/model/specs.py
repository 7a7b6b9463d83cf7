"""
KDEXP - Method, Prior and Sampler Specifications
Validated option models shared by the engine, the simulation harness and the CLI
"""

from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class MethodName(str, Enum):
    PLUGIN = "PlugIn"
    MI = "MI"
    MIA = "MIA"
    DU = "DU"
    MVN = "MVN"
    UKDE = "UKDE"
    MKDE = "MKDE"


LATENT_METHODS = (MethodName.DU, MethodName.MVN, MethodName.UKDE, MethodName.MKDE)


class MethodSpec(BaseModel):
    """How exposure uncertainty is propagated into the health model"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    method: MethodName
    summary_T: Literal["median", "mean"] = "median"
    du_metropolis: bool = False
    ukde_bandwidth: Literal["sheather_jones", "silverman"] = "sheather_jones"
    plugin_mcmc: bool = False

    @property
    def label(self) -> str:
        if self.method == MethodName.DU and self.du_metropolis:
            return "DU-MH"
        return self.method.value


class PriorSpec(BaseModel):
    """Priors on the regression coefficients, sigma^2 and the dispersion r"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    coef_prior: Literal["normal", "flat"] = "normal"
    coef_sd: float = Field(default=100.0, gt=0)
    sigma2_shape: float = Field(default=0.01, gt=0)
    sigma2_rate: float = Field(default=0.01, gt=0)
    r_max: int = Field(default=100, ge=1, le=100)

    @property
    def coef_precision(self) -> float:
        return 0.0 if self.coef_prior == "flat" else 1.0 / self.coef_sd**2


class SamplerConfig(BaseModel):
    """MCMC budget: total sweeps, burn-in, thinning and number of chains"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    iterations_total: int = Field(default=11_000, gt=0)
    burn_in: int = Field(default=1_000, ge=0)
    thin: int = Field(default=10, gt=0)
    chains: int = Field(default=1, gt=0)

    @model_validator(mode="after")
    def check_budget(self) -> "SamplerConfig":
        if self.burn_in >= self.iterations_total:
            raise ValueError("burn_in must be smaller than iterations_total")
        if (self.iterations_total - self.burn_in) % self.thin:
            raise ValueError("iterations_total - burn_in must be divisible by thin")
        return self

    @classmethod
    def simulation_preset(cls, chains: int = 1) -> "SamplerConfig":
        return cls(iterations_total=11_000, burn_in=1_000, thin=10, chains=chains)

    @classmethod
    def application_preset(cls, chains: int = 1) -> "SamplerConfig":
        return cls(iterations_total=220_000, burn_in=20_000, thin=20, chains=chains)

    @classmethod
    def preset(cls, name: str, chains: int = 1) -> "SamplerConfig":
        presets = {"simulation": cls.simulation_preset, "application": cls.application_preset}
        if name not in presets:
            raise ValueError(f"unknown sampler preset: {name}")
        return presets[name](chains=chains)

    @property
    def retained_per_chain(self) -> int:
        return (self.iterations_total - self.burn_in) // self.thin

    @property
    def retained(self) -> int:
        return self.retained_per_chain * self.chains

    def scaled(self, iterations_total: Optional[int] = None) -> "SamplerConfig":
        """Same burn-in fraction and thinning with a smaller total budget"""
        if iterations_total is None or iterations_total >= self.iterations_total:
            return self
        burn_in = self.burn_in * iterations_total // self.iterations_total
        kept = (iterations_total - burn_in) // self.thin * self.thin
        return SamplerConfig(
            iterations_total=burn_in + kept, burn_in=burn_in, thin=self.thin, chains=self.chains
        )

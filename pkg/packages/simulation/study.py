"""
KDEXP - Simulation Study
Scenario configuration, per-replicate fits of every method plus the
true-exposure reference, and the factorial grid.
"""

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from packages.engine.core.distributions import RandomSource
from packages.engine.core.mcmc import default_mi_draws, fit, fit_true_exposure
from packages.engine.core.model import HealthDataset, MethodName, MethodSpec, PriorSpec, SamplerConfig
from packages.shared.config import engine_config, shared_config, simulation_config
from packages.shared.exceptions import KdexpError, ScenarioAbortedError
from packages.shared.utils import Timer, atomic_write_json, canonical_hash, ensure_directory
from packages.simulation.reporting import MetricsReport
from packages.simulation.simgen import (
    gen_covariance,
    gen_exposure_ensemble,
    gen_health_outcomes,
    gen_locations,
)

logger = logging.getLogger("KDEXP.Simulation")

TRUE_LABEL = "True"
FIXED_EXPOSURE_METHODS = (MethodName.PLUGIN, MethodName.MI)
# checkpoints come back with sorted keys
RAW_COLUMNS = [
    "scenario", "theta_true", "correlated", "skewed", "tau2",
    "replicate", "method", "theta_hat", "lower", "upper", "failed", "error",
]


def default_methods() -> List[MethodSpec]:
    return [MethodSpec(method=name) for name in MethodName]


class ScenarioConfig(BaseModel):
    """One cell of the simulation design"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    theta_true: float = 1.0
    correlated: bool = False
    skewed: bool = False
    tau2: float = Field(default=0.1, ge=0)
    n: int = Field(default_factory=lambda: simulation_config.data_points, gt=1)
    m: int = Field(default_factory=lambda: simulation_config.desk_draws, gt=1)
    replicates: int = Field(default_factory=lambda: simulation_config.desk_replicates, gt=0)
    methods: List[MethodSpec] = Field(default_factory=default_methods)
    include_true: bool = True
    seed: int = Field(default_factory=lambda: engine_config.default_seed)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig.simulation_preset)
    mkde_iterations: Optional[int] = Field(default_factory=lambda: simulation_config.mkde_iterations)
    ci_level: float = Field(default=0.95, gt=0, lt=1)

    @field_validator("methods")
    @classmethod
    def unique_labels(cls, methods: List[MethodSpec]) -> List[MethodSpec]:
        labels = [spec.label for spec in methods]
        if len(set(labels)) != len(labels):
            raise ValueError("method labels must be unique")
        return methods

    @property
    def name(self) -> str:
        return (
            f"theta={self.theta_true:g}_corr={int(self.correlated)}"
            f"_skew={int(self.skewed)}_tau2={self.tau2:g}"
        )

    @property
    def checkpoint_key(self) -> str:
        """Cell name plus a fingerprint of every setting a replicate depends on"""
        settings = self.model_dump(mode="json", exclude={"replicates"})
        return f"{self.name}_{canonical_hash(settings)[:12]}"

    @property
    def factors(self) -> Dict[str, Any]:
        return {
            "scenario": self.name,
            "theta_true": self.theta_true,
            "correlated": self.correlated,
            "skewed": self.skewed,
            "tau2": self.tau2,
        }

    def prior_for(self, spec: MethodSpec) -> PriorSpec:
        """Flat coefficient priors for the fixed-exposure methods, normal(0, 100^2) otherwise"""
        if spec.method in FIXED_EXPOSURE_METHODS and not spec.plugin_mcmc:
            return PriorSpec(coef_prior="flat")
        return PriorSpec()

    def sampler_for(self, spec: MethodSpec) -> SamplerConfig:
        if spec.method == MethodName.MKDE:
            return self.sampler.scaled(self.mkde_iterations)
        return self.sampler


def _result_row(config: ScenarioConfig, replicate: int, label: str, samples=None, error: str = "") -> Dict[str, Any]:
    row = dict(config.factors, replicate=replicate, method=label)
    if samples is None:
        row.update(theta_hat=np.nan, lower=np.nan, upper=np.nan, failed=True, error=error)
        return row
    summary = samples.theta_summary(config.ci_level)
    row.update(theta_hat=summary["mean"], lower=summary["lower"], upper=summary["upper"], failed=False, error="")
    return row


def run_replicate(config: ScenarioConfig, replicate: int) -> List[Dict[str, Any]]:
    """Fresh locations, ensemble, truth and outcomes; every method fitted on the same data"""
    base = RandomSource.for_stream(config.seed, config.name, replicate)
    data_rng = base.spawn("data")
    locations = gen_locations(config.n, data_rng)
    sigma = gen_covariance(locations, config.correlated)
    simulated = gen_exposure_ensemble(config, sigma, data_rng)
    Y = gen_health_outcomes(simulated.truth, config.theta_true, data_rng)
    data = HealthDataset.with_intercept(Y, family="gaussian_identity")

    rows = []
    if config.include_true:
        try:
            samples = fit_true_exposure(
                data, simulated.truth, PriorSpec(coef_prior="flat"), config.sampler, base.spawn(TRUE_LABEL), threads=1
            )
            rows.append(_result_row(config, replicate, TRUE_LABEL, samples))
        except KdexpError as exc:
            logger.warning(f"{config.name} replicate {replicate} {TRUE_LABEL} failed: {exc}")
            rows.append(_result_row(config, replicate, TRUE_LABEL, error=str(exc)))

    for spec in config.methods:
        try:
            samples = fit(
                data,
                simulated.ensemble,
                spec,
                config.prior_for(spec),
                config.sampler_for(spec),
                base.spawn(spec.label),
                threads=1,
                mi_draws=default_mi_draws(config.sampler.retained, config.m),
            )
            rows.append(_result_row(config, replicate, spec.label, samples))
        except KdexpError as exc:
            logger.warning(f"{config.name} replicate {replicate} {spec.label} failed: {exc}")
            rows.append(_result_row(config, replicate, spec.label, error=str(exc)))
    return rows


def _replicate_path(checkpoint_dir: Path, replicate: int) -> Path:
    return checkpoint_dir / f"replicate_{replicate:05d}.json"


def _replicate_task(args) -> List[Dict[str, Any]]:
    config, replicate, checkpoint_dir = args
    rows = run_replicate(config, replicate)
    if checkpoint_dir is not None:
        atomic_write_json(_replicate_path(checkpoint_dir, replicate), rows)
    return rows


def _load_checkpoint(path: Path) -> Optional[List[Dict[str, Any]]]:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        logger.warning(f"Ignoring unreadable checkpoint {path}")
        return None


def run_scenario(
    config: ScenarioConfig,
    threads: Optional[int] = None,
    checkpoint_dir: Optional[Path] = None,
) -> MetricsReport:
    """All replicates of one cell; checkpoints written under the same settings are reused"""
    threads = engine_config.threads if threads is None else threads
    if checkpoint_dir is not None:
        checkpoint_dir = ensure_directory(Path(checkpoint_dir) / config.checkpoint_key)

    results: Dict[int, List[Dict[str, Any]]] = {}
    pending = []
    for replicate in range(config.replicates):
        path = None if checkpoint_dir is None else _replicate_path(checkpoint_dir, replicate)
        rows = _load_checkpoint(path) if path is not None and path.exists() else None
        if rows is None:
            pending.append((config, replicate, checkpoint_dir))
        else:
            results[replicate] = rows
    if results:
        logger.info(f"{config.name}: resuming with {len(results)} completed replicates")

    with Timer(f"Scenario {config.name} ({len(pending)} replicates to run)", logger):
        progress = tqdm(total=len(pending), desc=config.name, disable=not shared_config.show_progress, leave=False)
        if threads > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=min(threads, len(pending))) as ex:
                for task, rows in zip(pending, ex.map(_replicate_task, pending)):
                    results[task[1]] = rows
                    progress.update()
        else:
            for task in pending:
                results[task[1]] = _replicate_task(task)
                progress.update()
        progress.close()

    raw = pd.DataFrame(
        [row for replicate in sorted(results) for row in results[replicate]], columns=RAW_COLUMNS
    )
    limit = simulation_config.scenario_failure_fraction * config.replicates
    failures = raw[raw["failed"].astype(bool)].groupby("method").size()
    if (failures > limit).any():
        worst = failures.idxmax()
        raise ScenarioAbortedError(
            f"{config.name}: {int(failures.max())} of {config.replicates} replicates failed for {worst}"
        )
    return MetricsReport.from_raw(raw)


def run_grid(
    configs: Sequence[ScenarioConfig],
    threads: Optional[int] = None,
    checkpoint_dir: Optional[Path] = None,
) -> MetricsReport:
    """Scenarios in the given order, collated into one report"""
    reports = []
    for index, config in enumerate(configs, start=1):
        logger.info(f"Scenario {index}/{len(configs)}: {config.name}")
        reports.append(run_scenario(config, threads=threads, checkpoint_dir=checkpoint_dir))
    return MetricsReport.combine(reports)


def factorial_grid(desk_scale: bool = True, **overrides: Any) -> List[ScenarioConfig]:
    """2 theta x 2 tau2 x 2 correlation x 2 skew factorial"""
    scale = {}
    if not desk_scale:
        scale = {"m": simulation_config.full_draws, "replicates": simulation_config.full_replicates}
    configs = []
    for theta, tau2, correlated, skewed in itertools.product((0.0, 1.0), (0.1, 1.0), (False, True), (False, True)):
        settings = dict(scale, theta_true=theta, tau2=tau2, correlated=correlated, skewed=skewed)
        settings.update(overrides)
        configs.append(ScenarioConfig(**settings))
    return configs

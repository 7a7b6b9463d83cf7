"""
KDEXP - Fit Dispatcher
Chooses the Monte Carlo, Gibbs or multiple-imputation path for a method and family
"""

import logging
from typing import Optional

import numpy as np

from packages.engine.core.distributions import RandomSource
from packages.engine.core.mcmc.gibbs import run_gibbs
from packages.engine.core.mcmc.monte_carlo import default_mi_draws, run_mi, run_monte_carlo_gaussian
from packages.engine.core.mcmc.posterior import PosteriorSamples
from packages.engine.core.model import (
    ExposureEnsemble,
    HealthDataset,
    MethodName,
    MethodSpec,
    PriorSpec,
    SamplerConfig,
)
from packages.engine.core.updaters import plugin_exposure, prepare_ensemble
from packages.shared.exceptions import InvalidParameterError
from packages.shared.utils import Timer

logger = logging.getLogger("KDEXP.Fit")


def _uses_monte_carlo(data: HealthDataset, prior: PriorSpec, method: MethodSpec) -> bool:
    return data.family == "gaussian_identity" and prior.coef_prior == "flat" and not method.plugin_mcmc


def fit(
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    method: MethodSpec,
    prior: PriorSpec,
    config: SamplerConfig,
    rng: RandomSource,
    threads: Optional[int] = None,
    mi_draws: Optional[int] = None,
    progress: bool = False,
) -> PosteriorSamples:
    """Posterior draws of (beta, theta, nuisance) under the given exposure method"""
    if ensemble.n != data.n:
        raise InvalidParameterError(f"ensemble has {ensemble.n} rows but the dataset has {data.n}")
    if prior.coef_prior == "flat" and data.family != "gaussian_identity":
        raise InvalidParameterError("flat coefficient prior is only available for the gaussian family")

    logger.info(f"Fitting {method.label} ({data.family}, n={data.n}, m={ensemble.m})")
    with Timer(f"{method.label} fit", logger) as timer:
        if method.method == MethodName.PLUGIN:
            zhat = plugin_exposure(ensemble, method.summary_T)
            if _uses_monte_carlo(data, prior, method):
                samples = run_monte_carlo_gaussian(data, zhat, prior, config.retained, rng)
            else:
                samples = run_gibbs(data, ensemble, method, prior, config, rng, fixed_z=zhat, threads=threads)
        elif method.method == MethodName.MI:
            per_fit = mi_draws or default_mi_draws(config.retained, ensemble.m)
            samples = run_mi(data, ensemble, prior, per_fit, rng, threads=threads)
        else:
            prepared = prepare_ensemble(method, ensemble)
            samples = run_gibbs(data, prepared, method, prior, config, rng, threads=threads, progress=progress)
            if prepared.bandwidth_fallbacks:
                samples.metadata["bandwidth_fallbacks"] = prepared.bandwidth_fallbacks

    samples.metadata["runtime_seconds"] = timer.duration
    samples.metadata["family"] = data.family
    return samples


def fit_true_exposure(
    data: HealthDataset,
    z_true: np.ndarray,
    prior: PriorSpec,
    config: SamplerConfig,
    rng: RandomSource,
    threads: Optional[int] = None,
) -> PosteriorSamples:
    """Reference fit with the actual exposures in place of any ensemble"""
    z_true = np.asarray(z_true, dtype=float)
    method = MethodSpec(method=MethodName.PLUGIN)
    if _uses_monte_carlo(data, prior, method):
        samples = run_monte_carlo_gaussian(data, z_true, prior, config.retained, rng, method="True")
    else:
        ensemble = ExposureEnsemble(Z_star=z_true[:, None])
        samples = run_gibbs(data, ensemble, method, prior, config, rng, fixed_z=z_true, threads=threads)
        samples.method = "True"
    return samples

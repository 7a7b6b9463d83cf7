"""
KDEXP - Monte Carlo and Multiple Imputation Samplers
Exact independent draws for flat-prior gaussian fits with fixed exposures, and
pooling of one fit per ensemble column.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from packages.engine.core.distributions import RandomSource, sample_inverse_gamma
from packages.engine.core.mcmc.gibbs import parameter_names, run_chain
from packages.engine.core.mcmc.posterior import PosteriorSamples
from packages.engine.core.model import (
    ExposureEnsemble,
    HealthDataset,
    MethodName,
    MethodSpec,
    PriorSpec,
    SamplerConfig,
)
from packages.engine.core.updaters import mi_schedule
from packages.shared.config import engine_config
from packages.shared.exceptions import (
    FactorizationError,
    InvalidParameterError,
    NumericalError,
    ScenarioAbortedError,
)
from packages.shared.utils import Timer

logger = logging.getLogger("KDEXP.MonteCarlo")


def conjugate_linear_draws(
    design: np.ndarray,
    response: np.ndarray,
    draws: int,
    rng: RandomSource,
    sigma2_shape: float = 0.01,
    sigma2_rate: float = 0.01,
) -> Tuple[np.ndarray, np.ndarray]:
    """Flat-prior linear regression: sigma^2 ~ IG(a + (N - q)/2, b + RSS/2), coef | sigma^2 ~ MVN(OLS, sigma^2 (D'D)^-1)

    Returns (coefficient draws s x q, sigma^2 draws s).
    """
    if draws < 1:
        raise InvalidParameterError("draws must be at least 1")
    design = np.atleast_2d(np.asarray(design, dtype=float))
    N, q = design.shape
    if N <= q or np.linalg.matrix_rank(design) < q:
        raise FactorizationError(f"design of shape {N}x{q} is rank deficient")
    gram = design.T @ design
    try:
        G = linalg.cholesky(gram, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError("design cross-product is singular", condition=float(np.linalg.cond(gram))) from exc

    coef_hat = linalg.cho_solve((G, True), design.T @ response)
    resid = response - design @ coef_hat
    rss = float(resid @ resid)
    sigma2 = np.atleast_1d(
        sample_inverse_gamma(sigma2_shape + 0.5 * (N - q), sigma2_rate + 0.5 * rss, rng, size=draws)
    )
    U = rng.generator.standard_normal((q, draws))
    spread = linalg.solve_triangular(G, U, lower=True, trans="T") * np.sqrt(sigma2)
    return (coef_hat[:, None] + spread).T, sigma2


def run_monte_carlo_gaussian(
    data: HealthDataset,
    z_fixed: np.ndarray,
    prior: PriorSpec,
    draws: int,
    rng: RandomSource,
    method: str = "PlugIn",
) -> PosteriorSamples:
    if data.family != "gaussian_identity":
        raise InvalidParameterError("Monte Carlo sampler applies to the gaussian family only")
    if prior.coef_prior != "flat":
        raise InvalidParameterError("Monte Carlo sampler needs a flat coefficient prior")
    W = np.column_stack([data.X, np.asarray(z_fixed, dtype=float)])
    coef, sigma2 = conjugate_linear_draws(
        W, data.Y - data.O, draws, rng, prior.sigma2_shape, prior.sigma2_rate
    )
    return PosteriorSamples(
        draws=np.column_stack([coef, sigma2]),
        names=parameter_names(data),
        method=method,
        seed=rng.record(),
    )


def default_mi_draws(total_draws: int, m: int) -> int:
    """Per-fit draws so the pooled sample is about total_draws"""
    return max(1, total_draws // m)


def _mi_config(per_fit_draws: int) -> SamplerConfig:
    thin = engine_config.mi_nongaussian_thin
    burn_in = engine_config.mi_nongaussian_burn_in
    return SamplerConfig(iterations_total=burn_in + per_fit_draws * thin, burn_in=burn_in, thin=thin)


def _mi_fit(args) -> Optional[np.ndarray]:
    data, column, prior, per_fit_draws, rng, j = args
    try:
        if data.family == "gaussian_identity" and prior.coef_prior == "flat":
            return run_monte_carlo_gaussian(data, column, prior, per_fit_draws, rng, method="MI").draws
        spec = MethodSpec(method=MethodName.PLUGIN)
        ensemble = ExposureEnsemble(Z_star=column[:, None])
        return run_chain(data, ensemble, spec, prior, _mi_config(per_fit_draws), rng, fixed_z=column)
    except NumericalError as exc:
        logger.warning(f"Imputation fit for column {j} failed: {exc}")
        return None


def run_mi(
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    prior: PriorSpec,
    per_fit_draws: int,
    rng: RandomSource,
    threads: Optional[int] = None,
) -> PosteriorSamples:
    """One fit per ensemble column; draws pooled by concatenation and tagged with their column"""
    if per_fit_draws < 1:
        raise InvalidParameterError("per_fit_draws must be at least 1")
    threads = engine_config.threads if threads is None else threads
    tasks = [(data, column, prior, per_fit_draws, rng.spawn("mi", j), j) for j, column in mi_schedule(ensemble)]

    with Timer(f"MI ({ensemble.m} fits x {per_fit_draws} draws)", logger) as timer:
        if threads > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as ex:
                results = list(ex.map(_mi_fit, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
        else:
            results = [_mi_fit(task) for task in tasks]

    failed = [j for j, result in enumerate(results) if result is None]
    if len(failed) > engine_config.mi_failure_fraction * ensemble.m:
        raise ScenarioAbortedError(f"{len(failed)} of {ensemble.m} imputation fits failed")

    kept = [(j, result) for j, result in enumerate(results) if result is not None]
    return PosteriorSamples(
        draws=np.vstack([result for _, result in kept]),
        names=parameter_names(data),
        method="MI",
        seed=rng.record(),
        source_column=np.concatenate([np.full(result.shape[0], j) for j, result in kept]),
        metadata={"runtime_seconds": timer.duration, "failed_columns": failed, "per_fit_draws": per_fit_draws},
    )

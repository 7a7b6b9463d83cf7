"""
KDEXP - Gibbs Sampler
Regression, variance and dispersion full conditionals plus the chain driver.

Sweep order: (MIA column assignment) -> augmentation (omega, Ytilde) ->
exposure update -> (beta, theta) -> sigma^2 or r. omega is redrawn at the top
of the sweep following any change of r.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg
from tqdm import tqdm

from packages.engine.core.distributions import (
    RandomSource,
    negbin_logpmf,
    sample_categorical_logweights,
    sample_inverse_gamma,
)
from packages.engine.core.mcmc.posterior import PosteriorSamples
from packages.engine.core.model import (
    ChainState,
    ExposureEnsemble,
    HealthDataset,
    MethodName,
    MethodSpec,
    PriorSpec,
    SamplerConfig,
    augmentation_quantities,
)
from packages.engine.core.updaters import build_updater
from packages.shared.config import engine_config, shared_config
from packages.shared.exceptions import FactorizationError, InvalidParameterError, NumericalError
from packages.shared.utils import Timer

logger = logging.getLogger("KDEXP.Gibbs")


def parameter_names(data: HealthDataset) -> List[str]:
    names = [f"beta_{k}" for k in range(data.p)] + ["theta"]
    if data.family == "gaussian_identity":
        names.append("sigma2_eps")
    elif data.family == "negbin_logit":
        names.append("r")
    return names


def update_regression(
    state: ChainState,
    data: HealthDataset,
    omega: np.ndarray,
    Ytilde: np.ndarray,
    prior: PriorSpec,
    rng: RandomSource,
) -> Tuple[np.ndarray, float]:
    """(beta, theta) ~ MVN(V W' Omega (Ytilde - O), V), V = (W' Omega W + B0^-1)^-1, W = [X | z]"""
    W = np.column_stack([data.X, state.z])
    precision = (W.T * omega) @ W
    precision[np.diag_indices_from(precision)] += prior.coef_precision
    rhs = W.T @ (omega * (Ytilde - data.O))
    try:
        G = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError(
            "regression system is singular", condition=float(np.linalg.cond(precision))
        ) from exc
    mean = linalg.cho_solve((G, True), rhs)
    gamma = mean + linalg.solve_triangular(G, rng.generator.standard_normal(W.shape[1]), lower=True, trans="T")
    return gamma[:-1], float(gamma[-1])


def update_sigma2(
    state: ChainState, data: HealthDataset, rng: RandomSource, prior: Optional[PriorSpec] = None
) -> float:
    """sigma^2 ~ IG(a0 + n/2, b0 + RSS/2)"""
    if data.family != "gaussian_identity":
        raise InvalidParameterError("sigma^2 update applies to the gaussian family only")
    prior = prior or PriorSpec()
    resid = data.Y - state.linear_predictor(data)
    shape = prior.sigma2_shape + 0.5 * data.n
    rate = prior.sigma2_rate + 0.5 * float(resid @ resid)
    return float(sample_inverse_gamma(shape, rate, rng))


def update_dispersion_r(state: ChainState, data: HealthDataset, rng: RandomSource, r_max: Optional[int] = None) -> int:
    """Griddy Gibbs over r in {1..r_max} under a discrete uniform prior"""
    if data.family != "negbin_logit":
        raise InvalidParameterError("dispersion update applies to the negative binomial family only")
    r_max = r_max or engine_config.max_dispersion
    grid = np.arange(1, r_max + 1, dtype=float)
    psi = state.linear_predictor(data)
    logw = negbin_logpmf(data.Y[None, :], grid[:, None], psi[None, :]).sum(axis=1)
    return int(sample_categorical_logweights(logw, rng)) + 1


def _record(state: ChainState, data: HealthDataset) -> np.ndarray:
    row = list(state.beta) + [state.theta]
    if data.family == "gaussian_identity":
        row.append(state.sigma2_eps)
    elif data.family == "negbin_logit":
        row.append(state.r)
    return np.asarray(row, dtype=float)


def run_chain(
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    method: MethodSpec,
    prior: PriorSpec,
    config: SamplerConfig,
    rng: RandomSource,
    fixed_z: Optional[np.ndarray] = None,
    progress: bool = False,
) -> np.ndarray:
    """One chain; returns the retained draws as a matrix"""
    if prior.coef_prior == "flat" and data.family != "gaussian_identity":
        raise InvalidParameterError("flat coefficient prior is only available for the gaussian family")
    updater = build_updater(method, ensemble)
    z0 = updater.initial_exposure() if fixed_z is None else np.asarray(fixed_z, dtype=float)
    if z0.shape[0] != data.n:
        raise InvalidParameterError(f"exposure has {z0.shape[0]} rows but the dataset has {data.n}")
    state = ChainState.initial(data, z0)
    latent = updater.updates_latent and fixed_z is None
    assigns = updater.assigns_each_sweep and fixed_z is None

    retained = np.empty((config.retained_per_chain, data.p + 1 + (data.family != "bernoulli_logit")))
    kept = 0
    sweeps = tqdm(
        range(1, config.iterations_total + 1),
        desc=f"{method.label} chain",
        disable=not (progress and shared_config.show_progress),
        leave=False,
    )
    for sweep in sweeps:
        try:
            if assigns:
                state.z = updater.assign(state.z, rng)
            omega, Ytilde = augmentation_quantities(state, data, rng)
            state.omega = omega
            if latent:
                state.z = updater.update(state, data, omega, Ytilde, rng)
            state.beta, state.theta = update_regression(state, data, omega, Ytilde, prior, rng)
            if data.family == "gaussian_identity":
                state.sigma2_eps = update_sigma2(state, data, rng, prior)
            elif data.family == "negbin_logit":
                state.r = update_dispersion_r(state, data, rng, prior.r_max)
        except NumericalError as exc:
            raise exc.at_sweep(sweep)

        if sweep > config.burn_in and (sweep - config.burn_in) % config.thin == 0:
            retained[kept] = _record(state, data)
            kept += 1
    return retained


def _chain_task(args) -> np.ndarray:
    data, ensemble, method, prior, config, rng, fixed_z = args
    return run_chain(data, ensemble, method, prior, config, rng, fixed_z=fixed_z)


def run_gibbs(
    data: HealthDataset,
    ensemble: ExposureEnsemble,
    method: MethodSpec,
    prior: PriorSpec,
    config: SamplerConfig,
    rng: RandomSource,
    fixed_z: Optional[np.ndarray] = None,
    threads: Optional[int] = None,
    progress: bool = False,
) -> PosteriorSamples:
    """All chains of one fit; chain c uses the stream rng.spawn("chain", c)"""
    if method.method == MethodName.MI:
        raise InvalidParameterError("MI is fitted with run_mi, not a single Gibbs run")
    threads = engine_config.threads if threads is None else threads
    streams = [rng.spawn("chain", c) for c in range(config.chains)]

    with Timer(f"{method.label} Gibbs ({config.chains} chain(s), {config.iterations_total} sweeps)", logger) as timer:
        if threads > 1 and config.chains > 1:
            tasks = [(data, ensemble, method, prior, config, stream, fixed_z) for stream in streams]
            with ProcessPoolExecutor(max_workers=min(threads, config.chains)) as ex:
                chains = list(ex.map(_chain_task, tasks))
        else:
            chains = [
                run_chain(data, ensemble, method, prior, config, stream, fixed_z=fixed_z, progress=progress)
                for stream in streams
            ]

    return PosteriorSamples(
        draws=np.vstack(chains),
        names=parameter_names(data),
        method=method.label,
        seed=rng.record(),
        chain=np.repeat(np.arange(config.chains), config.retained_per_chain),
        metadata={"runtime_seconds": timer.duration, "sampler": config.model_dump()},
    )

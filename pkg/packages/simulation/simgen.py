"""
KDEXP - Synthetic Data Generation
Locations, spatial covariance, exposure ensembles with a held-out truth column,
and gaussian health outcomes for the simulation study.
"""

import logging
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from packages.engine.core.distributions import RandomSource
from packages.engine.core.model import ExposureEnsemble, TransformRecord, standardize_ensemble
from packages.shared.exceptions import FactorizationError, InvalidParameterError

logger = logging.getLogger("KDEXP.SimGen")

# correlation falls to 0.05 at distance 0.5
DECAY = -2.0 * np.log(0.05)


class SimulatedExposures(NamedTuple):
    ensemble: ExposureEnsemble
    truth: np.ndarray
    transform: TransformRecord


def gen_locations(n: int, rng: RandomSource) -> np.ndarray:
    """n x 2 iid uniform points in the unit square"""
    if n < 1:
        raise InvalidParameterError("n must be at least 1")
    return rng.generator.random((n, 2))


def gen_covariance(locations: np.ndarray, correlated: bool) -> np.ndarray:
    """exp(-phi d_ik) between locations, or the identity"""
    locations = np.atleast_2d(locations)
    if not correlated:
        return np.eye(locations.shape[0])
    return np.exp(-DECAY * cdist(locations, locations))


def gen_exposure_ensemble(config, Sigma: np.ndarray, rng: RandomSource) -> SimulatedExposures:
    """m ensemble columns plus one truth column from the same predictive law, jointly standardized"""
    n, m = Sigma.shape[0], config.m
    delta = rng.generator.normal(0.0, np.sqrt(config.tau2), size=n)
    noise = rng.generator.standard_normal((n, m + 1))
    if config.correlated:
        try:
            L = linalg.cholesky(Sigma, lower=True)
        except linalg.LinAlgError as exc:
            raise FactorizationError(
                "exposure covariance is not positive definite", condition=float(np.linalg.cond(Sigma))
            ) from exc
        noise = L @ noise
    draws = delta[:, None] + noise
    if config.skewed:
        draws = np.exp(draws)

    raw = ExposureEnsemble(Z_star=draws[:, :m])
    ensemble, record = standardize_ensemble(raw, "global_mean_sd")
    return SimulatedExposures(ensemble=ensemble, truth=record.apply(draws[:, m]), transform=record)


def gen_health_outcomes(z: np.ndarray, theta_true: float, rng: RandomSource) -> np.ndarray:
    """Y = theta z + N(0, 1) noise, no intercept"""
    z = np.asarray(z, dtype=float)
    return theta_true * z + rng.generator.standard_normal(z.size)

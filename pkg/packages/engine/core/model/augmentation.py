"""Likelihood-specific working precision and response shared by every exposure update.

Conditional on the auxiliary variables, all three families reduce to the weighted
Gaussian form -1/2 (Ytilde - O - X beta - z theta)' Omega (...) in the linear predictor.
"""

from typing import Tuple

import numpy as np

from packages.engine.core.distributions import RandomSource, sample_polya_gamma_vector
from packages.engine.core.model.data import ChainState, HealthDataset
from packages.shared.exceptions import InvalidParameterError, NumericalError


def augmentation_quantities(
    state: ChainState, data: HealthDataset, rng: RandomSource
) -> Tuple[np.ndarray, np.ndarray]:
    """(omega, Ytilde) for the current state"""
    if data.family == "gaussian_identity":
        if not state.sigma2_eps or state.sigma2_eps <= 0.0:
            raise InvalidParameterError("gaussian state needs sigma2_eps > 0")
        return np.full(data.n, 1.0 / state.sigma2_eps), data.Y.copy()

    psi = state.linear_predictor(data)
    if data.family == "bernoulli_logit":
        omega = sample_polya_gamma_vector(1, psi, rng)
        kappa = data.Y - 0.5
    else:
        if state.r is None:
            raise InvalidParameterError("negative binomial state needs r")
        omega = sample_polya_gamma_vector(state.r + data.Y, psi, rng)
        kappa = 0.5 * (data.Y - state.r)

    omega = np.maximum(omega, np.finfo(float).tiny)
    Ytilde = kappa / omega
    if not np.all(np.isfinite(Ytilde)):
        raise NumericalError("working response is not finite")
    return omega, Ytilde


def whitened_residual_target(
    state: ChainState, data: HealthDataset, omega: np.ndarray, Ytilde: np.ndarray
) -> np.ndarray:
    """Ytilde - O - X beta"""
    if Ytilde.shape[0] != data.n or omega.shape[0] != data.n:
        raise InvalidParameterError("augmentation vectors do not match the dataset")
    return Ytilde - data.O - data.X @ state.beta

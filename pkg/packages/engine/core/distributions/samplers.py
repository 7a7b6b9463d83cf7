"""Random-variate generators and densities used by the samplers."""

from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import gammaln

from packages.engine.core.distributions.polya_gamma import sample_polya_gamma_vector
from packages.engine.core.distributions.random_source import RandomSource
from packages.shared.exceptions import (
    DegenerateWeightsError,
    FactorizationError,
    InvalidParameterError,
)

Size = Optional[Union[int, Tuple[int, ...]]]


class PolyaGammaParams:
    """Arguments (b, c) of one PG(b, c) law"""

    __slots__ = ("shape_b", "tilt_c")

    def __init__(self, shape_b: int, tilt_c: float):
        if int(shape_b) != shape_b or shape_b < 1:
            raise InvalidParameterError(f"shape_b must be an integer >= 1, got {shape_b}")
        self.shape_b = int(shape_b)
        self.tilt_c = float(tilt_c)

    def __repr__(self) -> str:
        return f"PolyaGammaParams(shape_b={self.shape_b}, tilt_c={self.tilt_c})"


def sample_polya_gamma(params: PolyaGammaParams, rng: RandomSource) -> float:
    """One PG(b, c) draw"""
    return float(sample_polya_gamma_vector(params.shape_b, params.tilt_c, rng))


def sample_mvn(mean: np.ndarray, covariance_factor: np.ndarray, rng: RandomSource) -> np.ndarray:
    """mean + L u with u standard normal; L lower triangular"""
    mean = np.asarray(mean, dtype=float)
    factor = np.atleast_2d(np.asarray(covariance_factor, dtype=float))
    diag = np.diag(factor)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
        raise FactorizationError("covariance factor has a non-positive diagonal")
    u = rng.generator.standard_normal(mean.shape[0])
    return mean + factor @ u


def _check_positive(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)) or np.any(value <= 0.0):
        raise InvalidParameterError(f"{name} must be positive and finite")


def sample_gamma(shape: float, rate: float, rng: RandomSource, size: Size = None):
    """Gamma(shape, rate) draw(s)"""
    _check_positive("shape", np.asarray(shape))
    _check_positive("rate", np.asarray(rate))
    return rng.generator.gamma(shape, 1.0 / np.asarray(rate), size=size)


def sample_inverse_gamma(shape: float, rate: float, rng: RandomSource, size: Size = None):
    """Draw(s) with density proportional to x^(-shape-1) exp(-rate/x)"""
    return 1.0 / sample_gamma(shape, rate, rng, size=size)


def sample_categorical_logweights(logw: np.ndarray, rng: RandomSource) -> int:
    """Index j with probability exp(logw_j - logsumexp(logw))"""
    logw = np.asarray(logw, dtype=float)
    if np.any(np.isnan(logw)):
        raise InvalidParameterError("log weights contain NaN")
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateWeightsError("all log weights are -inf")
    cumulative = np.cumsum(np.exp(logw - top))
    u = (1.0 - rng.generator.random()) * cumulative[-1]
    return int(np.searchsorted(cumulative, u, side="left"))


def sample_categorical_rows(logw: np.ndarray, rng: RandomSource) -> np.ndarray:
    """Row-wise categorical draws for a k x m matrix of log weights"""
    logw = np.atleast_2d(np.asarray(logw, dtype=float))
    top = np.max(logw, axis=1)
    bad = ~np.isfinite(top)
    if bad.any():
        raise DegenerateWeightsError("all log weights are -inf", index=int(np.flatnonzero(bad)[0]))
    cumulative = np.cumsum(np.exp(logw - top[:, None]), axis=1)
    u = (1.0 - rng.generator.random(logw.shape[0])) * cumulative[:, -1]
    return np.sum(cumulative < u[:, None], axis=1)


def negbin_logpmf(y, r, psi) -> np.ndarray:
    """log P(Y=y) for P(Y=y) proportional to e^{y psi} / (1 + e^psi)^{y + r}"""
    y = np.asarray(y, dtype=float)
    r = np.asarray(r, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.any(y < 0):
        raise InvalidParameterError("negative binomial outcome must be >= 0")
    if np.any(r < 1):
        raise InvalidParameterError("negative binomial size r must be >= 1")
    log_choose = gammaln(y + r) - gammaln(r) - gammaln(y + 1.0)
    return log_choose + y * psi - (y + r) * np.logaddexp(0.0, psi)

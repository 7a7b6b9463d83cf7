"""Polya-Gamma sampling.

Draws come from the ``polyagamma`` package, driven by the caller's stream so
that the augmentation step stays reproducible. The closed-form mean and the
truncated series moments are kept here for calibration checks.
"""

from typing import Tuple, Union

import numpy as np
from polyagamma import random_polyagamma

from packages.engine.core.distributions.random_source import RandomSource
from packages.shared.exceptions import InvalidParameterError

ArrayLike = Union[float, int, np.ndarray]


def _validate(b: np.ndarray, c: np.ndarray) -> None:
    if not np.all(np.isfinite(c)):
        raise InvalidParameterError("Polya-Gamma tilt must be finite")
    if np.any(b < 1) or np.any(b != np.floor(b)):
        raise InvalidParameterError("Polya-Gamma shape must be an integer >= 1")


def sample_polya_gamma_vector(b: ArrayLike, c: ArrayLike, rng: RandomSource) -> np.ndarray:
    """Independent PG(b_i, c_i) draws for broadcast-compatible ``b`` and ``c``"""
    b_arr, c_arr = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(c, dtype=float))
    _validate(b_arr, c_arr)
    shape = b_arr.shape
    if b_arr.size == 0:
        return np.empty(shape)
    draws = random_polyagamma(
        np.ascontiguousarray(b_arr.ravel()),
        np.ascontiguousarray(c_arr.ravel()),
        random_state=rng.generator,
    )
    return np.asarray(draws, dtype=float).reshape(shape)


def polya_gamma_mean(b: ArrayLike, c: ArrayLike) -> np.ndarray:
    """E[PG(b, c)] = b/(2c) tanh(c/2), with the c -> 0 limit b/4"""
    b_arr, c_arr = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(c, dtype=float))
    safe = np.where(np.abs(c_arr) < 1e-8, 1.0, c_arr)
    return np.where(np.abs(c_arr) < 1e-8, 0.25 * b_arr, b_arr / (2.0 * safe) * np.tanh(0.5 * safe))


def polya_gamma_series_moments(b: float, c: float, terms: int = 10_000) -> Tuple[float, float]:
    """Mean and variance from the truncated sum-of-gammas representation

    PG(b, c) = 1/(2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2 / (4 pi^2)), g_k ~ Gamma(b, 1).
    """
    k = np.arange(1, terms + 1, dtype=float)
    d = (k - 0.5) ** 2 + c * c / (4.0 * np.pi**2)
    mean = b / (2.0 * np.pi**2) * np.sum(1.0 / d)
    variance = b / (4.0 * np.pi**4) * np.sum(1.0 / d**2)
    return float(mean), float(variance)

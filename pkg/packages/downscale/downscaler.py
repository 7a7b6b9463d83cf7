"""
KDEXP - Downscaler
Gaussian regression of ln(Z + 0.01) on a numerical-model predictor with
spatially and temporally varying coefficients, closed-form Monte Carlo
posterior draws, composition-sampled predictions and daily-max aggregation.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from packages.engine.core.distributions import RandomSource
from packages.engine.core.mcmc import conjugate_linear_draws
from packages.engine.core.model import ExposureEnsemble
from packages.shared.exceptions import InvalidParameterError

logger = logging.getLogger("KDEXP.Downscaler")

LOG_OFFSET = 0.01


def log_transform(values) -> np.ndarray:
    return np.log(np.asarray(values, dtype=float) + LOG_OFFSET)


def inverse_log_transform(values) -> np.ndarray:
    return np.exp(np.asarray(values, dtype=float)) - LOG_OFFSET


def build_downscaler_design(lat, lon, day_basis: np.ndarray, log_cmaq) -> np.ndarray:
    """[S, S * log_cmaq] with S = [1, lat, lon, lat*lon, B(t)]"""
    lat = np.asarray(lat, dtype=float).ravel()
    lon = np.asarray(lon, dtype=float).ravel()
    log_cmaq = np.asarray(log_cmaq, dtype=float).ravel()
    day_basis = np.atleast_2d(np.asarray(day_basis, dtype=float))
    if not (lat.size == lon.size == log_cmaq.size == day_basis.shape[0]):
        raise InvalidParameterError("design inputs must have the same number of rows")
    surface = np.column_stack([np.ones(lat.size), lat, lon, lat * lon, day_basis])
    return np.hstack([surface, surface * log_cmaq[:, None]])


def design_names(n_spline: int) -> List[str]:
    surface = ["intercept", "lat", "lon", "lat_lon"] + [f"time_{k + 1}" for k in range(n_spline)]
    return [f"eta0_{name}" for name in surface] + [f"eta1_{name}" for name in surface]


@dataclass
class DownscalerFit:
    """s joint posterior draws of the coefficients and sigma^2"""

    coef_draws: np.ndarray
    sigma2_draws: np.ndarray
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.coef_draws = np.atleast_2d(self.coef_draws)
        self.sigma2_draws = np.asarray(self.sigma2_draws, dtype=float).ravel()
        if self.coef_draws.shape[0] != self.sigma2_draws.size:
            raise InvalidParameterError("coefficient and sigma^2 draw counts differ")
        if not (np.all(np.isfinite(self.coef_draws)) and np.all(np.isfinite(self.sigma2_draws))):
            raise InvalidParameterError("downscaler draws contain non-finite values")

    @property
    def draws(self) -> int:
        return self.sigma2_draws.size

    def summary(self) -> pd.DataFrame:
        names = self.names or [f"coef_{k}" for k in range(self.coef_draws.shape[1])]
        frame = pd.DataFrame(
            {
                "mean": self.coef_draws.mean(axis=0),
                "sd": self.coef_draws.std(axis=0, ddof=1) if self.draws > 1 else 0.0,
            },
            index=pd.Index(names, name="parameter"),
        )
        frame.loc["sigma2_eps"] = [self.sigma2_draws.mean(), self.sigma2_draws.std(ddof=1) if self.draws > 1 else 0.0]
        return frame


def fit_downscaler(
    log_obs,
    design: np.ndarray,
    draws: int,
    rng: RandomSource,
    names: Optional[List[str]] = None,
) -> DownscalerFit:
    """Flat coefficient priors, IG(0.01, 0.01) on sigma^2; independent joint draws"""
    coef, sigma2 = conjugate_linear_draws(design, np.asarray(log_obs, dtype=float).ravel(), draws, rng)
    logger.info(f"Downscaler fitted on {design.shape[0]} observations with {design.shape[1]} coefficients")
    return DownscalerFit(coef_draws=coef, sigma2_draws=sigma2, names=names)


def predict_composition(fit: DownscalerFit, design_rows: np.ndarray, rng: RandomSource) -> np.ndarray:
    """rows x s predictive draws on the original scale; column j uses posterior draw j"""
    if fit.draws == 0:
        raise InvalidParameterError("fit has no draws")
    design_rows = np.atleast_2d(design_rows)
    mean = design_rows @ fit.coef_draws.T
    noise = rng.generator.standard_normal(mean.shape) * np.sqrt(fit.sigma2_draws)[None, :]
    return inverse_log_transform(mean + noise)


def aggregate_daily_max(draws: np.ndarray, day_index, n_days: Optional[int] = None) -> ExposureEnsemble:
    """Per day and per joint draw, the maximum over that day's locations"""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    day_index = np.asarray(day_index).ravel()
    if day_index.size != draws.shape[0]:
        raise InvalidParameterError("day index must map every prediction row")
    maxima = pd.DataFrame(draws).groupby(day_index, sort=True).max()
    if n_days is not None:
        missing = sorted(set(range(n_days)) - set(maxima.index.tolist()))
        if missing:
            raise InvalidParameterError(f"no prediction rows for day {missing[0]}")
    return ExposureEnsemble(Z_star=maxima.to_numpy())

"""
KDEXP - Downscaling Pipeline
Observation and prediction-grid tables, the end-to-end downscaler run that
yields a daily-max exposure ensemble, and a synthetic count study built on it.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import pandas as pd

from packages.downscale.downscaler import (
    DownscalerFit,
    aggregate_daily_max,
    build_downscaler_design,
    design_names,
    fit_downscaler,
    inverse_log_transform,
    log_transform,
    predict_composition,
)
from packages.downscale.splines import SplineBasis, build_spline_basis
from packages.engine.core.distributions import RandomSource
from packages.engine.core.model import ExposureEnsemble, HealthDataset, TransformRecord, standardize_ensemble
from packages.shared.exceptions import DataFormatError

logger = logging.getLogger("KDEXP.Pipeline")

OBSERVATION_COLUMNS = ["location_id", "lat", "lon", "day", "value", "predictor"]
GRID_COLUMNS = ["location_id", "lat", "lon", "day", "predictor"]


def _read_columns(path: Union[str, Path], required) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", path=str(path))
    try:
        frame = pd.read_csv(path, float_precision="round_trip", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"cannot parse delimited text: {exc}", path=str(path)) from exc
    for column in required:
        if column not in frame.columns:
            raise DataFormatError("missing column", path=str(path), field=column)
    numeric = frame[required[1:]].apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(numeric.to_numpy(dtype=float, na_value=np.nan)).all(axis=1)
    if bad.any():
        raise DataFormatError("non-numeric or non-finite entry", path=str(path), line=int(np.flatnonzero(bad)[0]) + 2)
    frame[required[1:]] = numeric
    return frame


def read_observations(path: Union[str, Path]) -> pd.DataFrame:
    frame = _read_columns(path, OBSERVATION_COLUMNS)
    if (frame["value"] <= -0.01).any():
        raise DataFormatError("observed values must exceed -0.01", path=str(path), field="value")
    if (frame["predictor"] <= -0.01).any():
        raise DataFormatError("predictor values must exceed -0.01", path=str(path), field="predictor")
    return frame


def read_prediction_grid(path: Union[str, Path]) -> pd.DataFrame:
    frame = _read_columns(path, GRID_COLUMNS)
    if (frame["predictor"] <= -0.01).any():
        raise DataFormatError("predictor values must exceed -0.01", path=str(path), field="predictor")
    return frame


def _design(frame: pd.DataFrame, time_basis: SplineBasis) -> np.ndarray:
    return build_downscaler_design(
        frame["lat"], frame["lon"], time_basis.evaluate(frame["day"]), log_transform(frame["predictor"])
    )


def run_downscaler(
    observations: pd.DataFrame,
    grid: pd.DataFrame,
    draws: int,
    rng: RandomSource,
    spline_df: int = 4,
) -> Tuple[ExposureEnsemble, DownscalerFit, Dict]:
    """Fit on observations, composition-sample the grid, take the daily max over grid locations"""
    time_basis = build_spline_basis(observations["day"], df=spline_df, kind="bspline_polynomial")
    downscaler = fit_downscaler(
        log_transform(observations["value"]),
        _design(observations, time_basis),
        draws,
        rng.spawn("fit"),
        names=design_names(spline_df),
    )
    predictions = predict_composition(downscaler, _design(grid, time_basis), rng.spawn("predict"))
    days = grid["day"].to_numpy()
    ensemble = aggregate_daily_max(predictions, days)
    summary = {
        "observations": int(len(observations)),
        "grid_rows": int(len(grid)),
        "days": int(ensemble.n),
        "draws": int(ensemble.m),
        "sigma2_eps_mean": float(downscaler.sigma2_draws.mean()),
        "ensemble_mean": float(ensemble.Z_star.mean()),
        "ensemble_sd": float(ensemble.Z_star.std()),
        "row_sd_median": float(np.median(ensemble.Z_star.std(axis=1))),
    }
    return ensemble, downscaler, summary


@dataclass
class SyntheticField:
    """Monitor observations, prediction grid and the true values on the grid"""

    observations: pd.DataFrame
    grid: pd.DataFrame
    grid_truth: np.ndarray
    coef_true: np.ndarray
    sigma2_true: float


def simulate_monitoring_data(
    rng: RandomSource,
    n_monitors: int = 15,
    n_days: int = 365,
    n_cells: int = 3,
    sigma2: float = 0.04,
    spline_df: int = 4,
) -> SyntheticField:
    """Synthetic monitors and grid cells following the downscaler model itself"""
    gen = rng.generator
    days = np.arange(n_days, dtype=float)
    time_basis = build_spline_basis(days, df=spline_df, kind="bspline_polynomial")
    q = 2 * (4 + spline_df)
    coef_true = gen.normal(0.0, 0.1, size=q)
    coef_true[0] = 0.5
    coef_true[q // 2] = 0.8

    def field(lat, lon, n_sites):
        site = np.repeat(np.arange(n_sites), n_days)
        day = np.tile(days, n_sites)
        cmaq_log = (
            3.0
            + 0.5 * np.sin(2.0 * np.pi * day / 365.0)
            + 0.3 * lat[site]
            - 0.2 * lon[site]
            + gen.normal(0.0, 0.2, size=site.size)
        )
        frame = pd.DataFrame(
            {
                "location_id": site,
                "lat": lat[site],
                "lon": lon[site],
                "day": day,
                "predictor": inverse_log_transform(cmaq_log),
            }
        )
        design = build_downscaler_design(frame["lat"], frame["lon"], time_basis.evaluate(day), cmaq_log)
        truth = inverse_log_transform(design @ coef_true + gen.normal(0.0, np.sqrt(sigma2), size=site.size))
        return frame, truth

    observations, values = field(gen.random(n_monitors), gen.random(n_monitors), n_monitors)
    observations["value"] = values
    grid, grid_truth = field(gen.random(n_cells), gen.random(n_cells), n_cells)
    return SyntheticField(
        observations=observations[OBSERVATION_COLUMNS],
        grid=grid[GRID_COLUMNS],
        grid_truth=grid_truth,
        coef_true=coef_true,
        sigma2_true=sigma2,
    )


@dataclass
class StillbirthStudy:
    """Synthetic daily counts with a downscaler-derived exposure ensemble"""

    data: HealthDataset
    ensemble: ExposureEnsemble
    truth: np.ndarray
    theta_true: float
    r_true: int
    lag: int
    transform: TransformRecord


def simulate_stillbirth_study(
    rng: RandomSource,
    theta: float = 0.1,
    r: int = 10,
    n_days: int = 365,
    draws: int = 200,
    lag: int = 0,
    mean_births: float = 300.0,
    baseline_rate: float = 0.005,
    trend_df: int = 4,
    temperature_df: int = 4,
) -> StillbirthStudy:
    """Negative-binomial counts with a log-births offset, day-of-week and spline covariates"""
    gen = rng.generator
    synthetic = simulate_monitoring_data(rng.spawn("field"), n_days=n_days)
    ensemble, _, _ = run_downscaler(synthetic.observations, synthetic.grid, draws, rng.spawn("downscale"))
    truth_daily = pd.Series(synthetic.grid_truth).groupby(synthetic.grid["day"].to_numpy()).max().to_numpy()

    ensemble, record = standardize_ensemble(ensemble, "median_iqr")
    truth = record.apply(truth_daily)

    days = np.arange(n_days, dtype=float)
    weekday = (days.astype(int) % 7)[:, None] == np.arange(1, 7)[None, :]
    temperature = 15.0 + 10.0 * np.sin(2.0 * np.pi * (days - 100.0) / 365.0) + gen.normal(0.0, 2.0, n_days)
    covariates = np.column_stack(
        [
            weekday.astype(float),
            build_spline_basis(days, df=trend_df, kind="natural_cubic").basis_matrix,
            build_spline_basis(temperature, df=temperature_df, kind="natural_cubic").basis_matrix,
        ]
    )
    covariates = (covariates - covariates.mean(axis=0)) / covariates.std(axis=0)
    births = gen.poisson(mean_births, size=n_days).clip(min=1)
    offset = np.log(births)

    # exposure on day t - lag drives the count on day t
    exposure = np.concatenate([np.zeros(lag), truth[: n_days - lag]])
    beta = np.concatenate([[np.log(baseline_rate / r)], gen.normal(0.0, 0.05, covariates.shape[1])])
    design = np.column_stack([np.ones(n_days), covariates])
    psi = offset + design @ beta + theta * exposure
    probability = 1.0 / (1.0 + np.exp(psi))
    counts = gen.negative_binomial(r, probability)

    data = HealthDataset(Y=counts, X=design, family="negbin_logit", O=offset)
    return StillbirthStudy(
        data=data.lagged(lag),
        ensemble=ensemble.lagged(lag),
        truth=truth[: n_days - lag],
        theta_true=theta,
        r_true=r,
        lag=lag,
        transform=record,
    )

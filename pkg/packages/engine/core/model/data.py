"""
KDEXP - Model Data Types
Exposure ensemble, health dataset and per-chain state for the two-stage model
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from packages.engine.core.bandwidth import (
    BandwidthMatrix,
    bandwidth_scott_matrix,
    select_row_bandwidths,
)
from packages.engine.core.distributions import RandomSource
from packages.shared.exceptions import DegenerateSampleError, InvalidParameterError

logger = logging.getLogger("KDEXP.Model")

FAMILIES = ("gaussian_identity", "bernoulli_logit", "negbin_logit")
SUMMARIES = ("median", "mean")
STANDARDIZE_MODES = ("global_mean_sd", "median_iqr")


def row_summary(Z_star: np.ndarray, summary_T: str) -> np.ndarray:
    """T(z*_i.) for every row"""
    if summary_T == "median":
        return np.median(Z_star, axis=1)
    if summary_T == "mean":
        return np.mean(Z_star, axis=1)
    raise InvalidParameterError(f"unknown summary: {summary_T}")


@dataclass
class ExposureEnsemble:
    """n x m matrix of first-stage predictive draws and its summaries"""

    Z_star: np.ndarray
    summary_T: str = "median"
    zhat: np.ndarray = field(init=False, repr=False)
    zbar: np.ndarray = field(init=False, repr=False)
    h: Optional[np.ndarray] = field(default=None, repr=False)
    bandwidth_method: Optional[str] = None
    bandwidth_fallbacks: int = 0
    bandwidth_matrix: Optional[BandwidthMatrix] = field(default=None, repr=False)

    def __post_init__(self):
        Z_star = np.asarray(self.Z_star, dtype=float)
        if Z_star.ndim == 1:
            Z_star = Z_star[:, None]
        if Z_star.ndim != 2 or Z_star.size == 0:
            raise InvalidParameterError("ensemble must be a non-empty n x m matrix")
        if not np.all(np.isfinite(Z_star)):
            raise InvalidParameterError("ensemble contains non-finite entries")
        self.Z_star = Z_star
        self.zhat = row_summary(Z_star, self.summary_T)
        self.zbar = Z_star.mean(axis=1)

    @classmethod
    def from_matrix(
        cls,
        Z_star: np.ndarray,
        summary_T: str = "median",
        ukde_bandwidth: Optional[str] = None,
        with_bandwidth_matrix: bool = False,
    ) -> "ExposureEnsemble":
        ensemble = cls(Z_star=Z_star, summary_T=summary_T)
        if ukde_bandwidth is not None:
            ensemble = ensemble.with_row_bandwidths(ukde_bandwidth)
        if with_bandwidth_matrix:
            ensemble = ensemble.with_bandwidth_matrix()
        return ensemble

    @property
    def n(self) -> int:
        return self.Z_star.shape[0]

    @property
    def m(self) -> int:
        return self.Z_star.shape[1]

    @cached_property
    def Sigma_hat(self) -> np.ndarray:
        """Sample covariance over columns (divisor m - 1)"""
        if self.m < 2:
            raise DegenerateSampleError("covariance needs at least two ensemble columns")
        centered = self.Z_star - self.zbar[:, None]
        sigma = centered @ centered.T / (self.m - 1)
        return 0.5 * (sigma + sigma.T)

    def column(self, j: int) -> np.ndarray:
        return self.Z_star[:, j]

    def with_row_bandwidths(self, method: str = "sheather_jones") -> "ExposureEnsemble":
        if self.h is not None and self.bandwidth_method == method:
            return self
        h, fallbacks = select_row_bandwidths(self.Z_star, method)
        return replace(self, h=h, bandwidth_method=method, bandwidth_fallbacks=fallbacks)

    def with_bandwidth_matrix(self) -> "ExposureEnsemble":
        if self.bandwidth_matrix is not None:
            return self
        return replace(self, bandwidth_matrix=bandwidth_scott_matrix(self.Z_star))

    def _rebuilt(self, Z_star: np.ndarray) -> "ExposureEnsemble":
        ensemble = ExposureEnsemble(Z_star=Z_star, summary_T=self.summary_T)
        if self.h is not None:
            ensemble = ensemble.with_row_bandwidths(self.bandwidth_method)
        if self.bandwidth_matrix is not None:
            ensemble = ensemble.with_bandwidth_matrix()
        return ensemble

    def lagged(self, lag: int) -> "ExposureEnsemble":
        """Exposure rows aligned to outcome rows lag steps later (last lag rows dropped)"""
        if lag < 0 or lag >= self.n:
            raise InvalidParameterError(f"lag must be in [0, {self.n - 1}], got {lag}")
        if lag == 0:
            return self
        return self._rebuilt(self.Z_star[: self.n - lag])

    def shuffled_rows(self, rng: RandomSource) -> "ExposureEnsemble":
        """Same rows in random order, breaking the alignment with the outcomes"""
        order = rng.generator.permutation(self.n)
        return self._rebuilt(self.Z_star[order])


@dataclass
class HealthDataset:
    """Outcome, design and offset for the health model"""

    Y: np.ndarray
    X: np.ndarray
    family: str = "gaussian_identity"
    O: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameterError(f"unknown family: {self.family}")
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        self.X = X[:, None] if X.ndim == 1 else X
        n = self.Y.size
        self.O = np.zeros(n) if self.O is None else np.asarray(self.O, dtype=float).ravel()

        if self.X.shape[0] != n or self.O.size != n:
            raise InvalidParameterError("Y, X and O must have the same number of rows")
        if not (np.all(np.isfinite(self.Y)) and np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.O))):
            raise InvalidParameterError("dataset contains non-finite values")
        if not np.allclose(self.X[:, 0], 1.0):
            raise InvalidParameterError("first column of X must be the intercept")
        if np.linalg.matrix_rank(self.X) < self.X.shape[1]:
            raise InvalidParameterError("X does not have full column rank")

        if self.family == "bernoulli_logit" and not np.all(np.isin(self.Y, (0.0, 1.0))):
            raise InvalidParameterError("bernoulli outcomes must be 0 or 1")
        if self.family == "negbin_logit" and (np.any(self.Y < 0) or np.any(self.Y != np.floor(self.Y))):
            raise InvalidParameterError("negative binomial outcomes must be non-negative integers")

    @classmethod
    def with_intercept(cls, Y, covariates=None, family: str = "gaussian_identity", O=None) -> "HealthDataset":
        Y = np.asarray(Y, dtype=float).ravel()
        columns = [np.ones(Y.size)]
        if covariates is not None:
            covariates = np.asarray(covariates, dtype=float)
            columns.extend(np.atleast_2d(covariates.T) if covariates.ndim > 1 else [covariates])
        return cls(Y=Y, X=np.column_stack(columns), family=family, O=O)

    @property
    def n(self) -> int:
        return self.Y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def lagged(self, lag: int) -> "HealthDataset":
        """Drop the first lag rows to pair with ExposureEnsemble.lagged"""
        if lag < 0 or lag >= self.n:
            raise InvalidParameterError(f"lag must be in [0, {self.n - 1}], got {lag}")
        if lag == 0:
            return self
        return HealthDataset(Y=self.Y[lag:], X=self.X[lag:], family=self.family, O=self.O[lag:])


@dataclass
class ChainState:
    """Current values of every sampled quantity in one chain"""

    beta: np.ndarray
    theta: float
    z: np.ndarray
    omega: np.ndarray
    sigma2_eps: Optional[float] = None
    r: Optional[int] = None

    @classmethod
    def initial(cls, data: HealthDataset, z0: np.ndarray) -> "ChainState":
        return cls(
            beta=np.zeros(data.p),
            theta=0.0,
            z=np.array(z0, dtype=float),
            omega=np.ones(data.n),
            sigma2_eps=1.0 if data.family == "gaussian_identity" else None,
            r=10 if data.family == "negbin_logit" else None,
        )

    def validate(self, data: HealthDataset) -> None:
        if np.any(self.omega <= 0.0):
            raise InvalidParameterError("omega entries must be positive")
        if data.family == "gaussian_identity" and not (self.sigma2_eps and self.sigma2_eps > 0.0):
            raise InvalidParameterError("gaussian state needs sigma2_eps > 0")
        if data.family == "negbin_logit" and not (self.r is not None and 1 <= self.r <= 100):
            raise InvalidParameterError("negative binomial state needs 1 <= r <= 100")

    def linear_predictor(self, data: HealthDataset) -> np.ndarray:
        return data.O + data.X @ self.beta + self.z * self.theta


@dataclass(frozen=True)
class TransformRecord:
    """Affine map x -> (x - location) / scale shared by Z* and the truth vector"""

    location: float
    scale: float
    mode: str

    def apply(self, values):
        return (np.asarray(values, dtype=float) - self.location) / self.scale

    def invert(self, values):
        return np.asarray(values, dtype=float) * self.scale + self.location


def standardize_ensemble(
    ensemble: ExposureEnsemble, mode: str = "global_mean_sd"
) -> Tuple[ExposureEnsemble, TransformRecord]:
    values = ensemble.Z_star
    if mode == "global_mean_sd":
        location, scale = float(values.mean()), float(values.std())
    elif mode == "median_iqr":
        q75, q25 = np.percentile(values, [75, 25])
        location, scale = float(np.median(values)), float(q75 - q25)
    else:
        raise InvalidParameterError(f"unknown standardization mode: {mode}")
    if not np.isfinite(scale) or scale <= 0.0:
        raise DegenerateSampleError("ensemble has zero scale and cannot be standardized")

    record = TransformRecord(location=location, scale=scale, mode=mode)
    logger.debug(f"Standardized ensemble with {mode}: location={location:.4g}, scale={scale:.4g}")
    return ensemble._rebuilt(record.apply(values)), record

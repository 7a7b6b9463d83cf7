"""
KDEXP - Bandwidth Selection
Univariate selectors for the per-row KDE priors and the Scott's-rule bandwidth
matrix for the joint KDE prior. Bandwidths are computed once per analysis and
stay fixed while sampling.
"""

import logging
from dataclasses import dataclass
from typing import Any, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import bisect

from packages.shared.config import engine_config
from packages.shared.exceptions import DegenerateSampleError, SingularBandwidthError

logger = logging.getLogger("KDEXP.Bandwidth")

SQRT_2PI = np.sqrt(2.0 * np.pi)
PAIR_BINS = 1000
DELTA_MAX = 1000.0
UNIVARIATE_METHODS = ("sheather_jones", "silverman")


@dataclass(frozen=True)
class UnivariateBandwidth:
    """Bandwidth h > 0 in exposure units"""

    h: float
    method: str
    fallback: bool = False


@dataclass(frozen=True)
class BandwidthMatrix:
    """Symmetric positive-definite bandwidth matrix with cached factor and inverse"""

    H: np.ndarray
    chol_H: np.ndarray
    inv_H: np.ndarray


def _spread(samples: np.ndarray) -> Tuple[float, float]:
    sd = float(np.std(samples, ddof=1))
    q75, q25 = np.percentile(samples, [75, 25])
    return sd, float(q75 - q25)


def _as_samples(samples: Any, minimum: int) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < minimum:
        raise DegenerateSampleError(f"need at least {minimum} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateSampleError("samples contain non-finite values")
    if np.ptp(x) == 0.0:
        raise DegenerateSampleError("samples are constant")
    return x


def bandwidth_silverman(samples) -> UnivariateBandwidth:
    """Rule of thumb 0.9 * min(sd, IQR/1.34) * m^(-1/5)"""
    x = _as_samples(samples, 2)
    sd, iqr = _spread(x)
    scale = min(sd, iqr / 1.34)
    if scale <= 0.0:
        scale = sd
    return UnivariateBandwidth(h=0.9 * scale * x.size ** (-0.2), method="silverman")


def bandwidth_scott(samples) -> UnivariateBandwidth:
    """Normal-reference rule 1.06 * sd * m^(-1/5)"""
    x = _as_samples(samples, 2)
    sd, _ = _spread(x)
    return UnivariateBandwidth(h=1.06 * sd * x.size ** (-0.2), method="scott")


def _pair_counts(x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Counts of unordered pairs by binned distance (bin width, counts per lag)"""
    lo = x.min()
    width = np.ptp(x) * 1.01 / PAIR_BINS
    index = np.minimum(np.floor((x - lo) / width).astype(np.int64), PAIR_BINS - 1)
    hist = np.bincount(index, minlength=PAIR_BINS).astype(float)
    lags = np.correlate(hist, hist, mode="full")[PAIR_BINS - 1 :]
    lags[0] = (lags[0] - x.size) / 2.0
    return width, lags


class _DensityFunctionals:
    """Gaussian-kernel estimates of the 4th and 6th derivative functionals"""

    def __init__(self, x: np.ndarray):
        self.n = x.size
        self.width, self.counts = _pair_counts(x)
        self.offsets = np.arange(self.counts.size) * self.width

    def _delta(self, h: float) -> np.ndarray:
        return (self.offsets / h) ** 2

    def sd(self, h: float) -> float:
        delta = self._delta(h)
        keep = delta < DELTA_MAX
        d = delta[keep]
        total = np.sum(self.counts[keep] * np.exp(-0.5 * d) * (d * d - 6.0 * d + 3.0))
        total = 2.0 * total + 3.0 * self.n
        return total / (self.n * (self.n - 1) * h**5 * SQRT_2PI)

    def td(self, h: float) -> float:
        delta = self._delta(h)
        keep = delta < DELTA_MAX
        d = delta[keep]
        total = np.sum(
            self.counts[keep] * np.exp(-0.5 * d) * (d**3 - 15.0 * d * d + 45.0 * d - 15.0)
        )
        total = 2.0 * total - 15.0 * self.n
        return -total / (self.n * (self.n - 1) * h**7 * SQRT_2PI)


def bandwidth_sheather_jones(samples) -> UnivariateBandwidth:
    """Solve-the-equation plug-in bandwidth; falls back to Silverman when no root is bracketed"""
    x = _as_samples(samples, 10)
    silverman = bandwidth_silverman(x)
    fallback = UnivariateBandwidth(h=silverman.h, method="sheather_jones", fallback=True)

    n = x.size
    sd, iqr = _spread(x)
    scale = min(sd, iqr / 1.349)
    if scale <= 0.0:
        scale = sd
    functionals = _DensityFunctionals(x)

    a = 1.24 * scale * n ** (-1.0 / 7.0)
    b = 1.23 * scale * n ** (-1.0 / 9.0)
    td = functionals.td(b)
    sd_a = functionals.sd(a)
    if not np.isfinite(td) or td <= 0.0 or not np.isfinite(sd_a) or sd_a <= 0.0:
        logger.debug("Sheather-Jones functionals degenerate, using Silverman")
        return fallback
    alpha2 = 1.357 * (sd_a / td) ** (1.0 / 7.0)
    c1 = 1.0 / (2.0 * np.sqrt(np.pi) * n)

    def equation(h: float) -> float:
        s = functionals.sd(alpha2 * h ** (5.0 / 7.0))
        if not np.isfinite(s) or s <= 0.0:
            return np.nan
        return (c1 / s) ** 0.2 - h

    lower, upper = silverman.h / 100.0, silverman.h * 100.0
    f_lower, f_upper = equation(lower), equation(upper)
    if not (np.isfinite(f_lower) and np.isfinite(f_upper)) or f_lower * f_upper > 0.0:
        logger.debug("Sheather-Jones root not bracketed, using Silverman")
        return fallback

    root = bisect(
        equation,
        lower,
        upper,
        xtol=silverman.h * 1e-14,
        maxiter=engine_config.sj_bisection_steps,
        disp=False,
    )
    return UnivariateBandwidth(h=float(root), method="sheather_jones")


def select_row_bandwidths(Z_star: np.ndarray, method: str = "sheather_jones") -> Tuple[np.ndarray, int]:
    """Per-row bandwidths h_i and the number of rows that fell back to Silverman"""
    if method not in UNIVARIATE_METHODS:
        raise ValueError(f"unknown bandwidth method: {method}")
    selector = bandwidth_sheather_jones if method == "sheather_jones" else bandwidth_silverman
    results = [selector(row) for row in np.atleast_2d(Z_star)]
    fallbacks = sum(result.fallback for result in results)
    if fallbacks:
        logger.info(f"{fallbacks} of {len(results)} rows fell back to Silverman bandwidths")
    return np.array([result.h for result in results]), fallbacks


def regularized_covariance(Z_star: np.ndarray, jitter: float = None) -> np.ndarray:
    """Sample covariance of the columns of Z* with eps * mean(diag) added to the diagonal"""
    Z_star = np.atleast_2d(np.asarray(Z_star, dtype=float))
    if Z_star.shape[1] < 2:
        raise DegenerateSampleError("covariance needs at least two draws per row")
    jitter = engine_config.covariance_jitter if jitter is None else jitter
    sigma = np.atleast_2d(np.cov(Z_star, ddof=1))
    level = float(np.mean(np.diag(sigma)))
    if not np.isfinite(level) or level <= 0.0:
        raise SingularBandwidthError("ensemble covariance is zero")
    return sigma + jitter * level * np.eye(sigma.shape[0])


def bandwidth_scott_matrix(ensemble) -> BandwidthMatrix:
    """H = m^(-2/(n+4)) * Sigma_hat"""
    Z_star = np.atleast_2d(np.asarray(getattr(ensemble, "Z_star", ensemble), dtype=float))
    n, m = Z_star.shape
    sigma = regularized_covariance(Z_star)
    H = m ** (-2.0 / (n + 4.0)) * sigma
    try:
        chol = linalg.cholesky(H, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularBandwidthError(
            f"bandwidth matrix is not positive definite: {exc}",
            condition=float(np.linalg.cond(H)),
        ) from exc
    inv_H = linalg.cho_solve((chol, True), np.eye(n))
    inv_H = 0.5 * (inv_H + inv_H.T)
    return BandwidthMatrix(H=H, chol_H=chol, inv_H=inv_H)

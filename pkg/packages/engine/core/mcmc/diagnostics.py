"""Geweke convergence diagnostic with batch-means spectral variance at zero."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from packages.engine.core.mcmc.posterior import PosteriorSamples
from packages.shared.exceptions import InvalidParameterError

logger = logging.getLogger("KDEXP.Diagnostics")

MIN_DRAWS = 100


def batch_means_variance(x: np.ndarray) -> float:
    """Variance of the mean of x from non-overlapping batches (about sqrt(len) batches)"""
    x = np.asarray(x, dtype=float)
    size = max(1, int(np.floor(np.sqrt(x.size))))
    count = x.size // size
    if count < 2:
        return float(np.var(x, ddof=1) / x.size) if x.size > 1 else np.nan
    trimmed = x[x.size - count * size :]
    means = trimmed.reshape(count, size).mean(axis=1)
    long_run = size * np.sum((means - trimmed.mean()) ** 2) / (count - 1)
    return float(long_run / trimmed.size)


def geweke_z(chain: np.ndarray, frac_first: float = 0.1, frac_last: float = 0.5) -> float:
    """(mean_first - mean_last) / sqrt(SE_first^2 + SE_last^2); NaN when undefined"""
    chain = np.asarray(chain, dtype=float).ravel()
    if not (0.0 < frac_first < 1.0 and 0.0 < frac_last < 1.0 and frac_first + frac_last <= 1.0):
        raise InvalidParameterError("window fractions must be in (0, 1) and not overlap")
    if chain.size < MIN_DRAWS:
        raise InvalidParameterError(f"Geweke diagnostic needs at least {MIN_DRAWS} draws")
    first = chain[: int(np.floor(frac_first * chain.size))]
    last = chain[chain.size - int(np.floor(frac_last * chain.size)) :]
    variance = batch_means_variance(first) + batch_means_variance(last)
    if not np.isfinite(variance) or variance <= 0.0:
        return float("nan")
    return float((first.mean() - last.mean()) / np.sqrt(variance))


@dataclass
class GewekeReport:
    """Per-parameter z-scores, one per chain"""

    z_scores: Dict[str, List[float]]
    frac_first: float = 0.1
    frac_last: float = 0.5
    undefined: List[str] = field(default_factory=list)

    def max_abs(self) -> Dict[str, float]:
        return {
            name: float(np.nanmax(np.abs(scores))) if np.any(np.isfinite(scores)) else float("nan")
            for name, scores in self.z_scores.items()
        }

    def flagged(self, threshold: float = 1.96) -> List[str]:
        return [name for name, value in self.max_abs().items() if np.isfinite(value) and value > threshold]

    def to_dict(self) -> Dict:
        return {
            "frac_first": self.frac_first,
            "frac_last": self.frac_last,
            "z_scores": {name: [None if np.isnan(z) else z for z in scores] for name, scores in self.z_scores.items()},
            "undefined": self.undefined,
            "flagged": self.flagged(),
        }


def geweke_diagnostic(samples: PosteriorSamples, frac_first: float = 0.1, frac_last: float = 0.5) -> GewekeReport:
    z_scores: Dict[str, List[float]] = {name: [] for name in samples.names}
    for chain in samples.chains:
        part = samples.chain_draws(chain)
        for k, name in enumerate(samples.names):
            z_scores[name].append(geweke_z(part.draws[:, k], frac_first, frac_last))
    undefined = [name for name, scores in z_scores.items() if any(np.isnan(scores))]
    if undefined:
        logger.warning(f"Geweke diagnostic undefined for constant parameters: {', '.join(undefined)}")
    return GewekeReport(z_scores=z_scores, frac_first=frac_first, frac_last=frac_last, undefined=undefined)

from .polya_gamma import (
    polya_gamma_mean,
    polya_gamma_series_moments,
    sample_polya_gamma_vector,
)
from .random_source import RandomSource, stream_key
from .samplers import (
    PolyaGammaParams,
    negbin_logpmf,
    sample_categorical_logweights,
    sample_categorical_rows,
    sample_gamma,
    sample_inverse_gamma,
    sample_mvn,
    sample_polya_gamma,
)

__all__ = [
    "RandomSource",
    "stream_key",
    "PolyaGammaParams",
    "sample_polya_gamma",
    "sample_polya_gamma_vector",
    "polya_gamma_mean",
    "polya_gamma_series_moments",
    "sample_mvn",
    "sample_gamma",
    "sample_inverse_gamma",
    "sample_categorical_logweights",
    "sample_categorical_rows",
    "negbin_logpmf",
]

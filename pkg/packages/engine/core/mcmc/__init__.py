from .diagnostics import GewekeReport, batch_means_variance, geweke_diagnostic, geweke_z
from .fit import fit, fit_true_exposure
from .gibbs import (
    parameter_names,
    run_chain,
    run_gibbs,
    update_dispersion_r,
    update_regression,
    update_sigma2,
)
from .monte_carlo import conjugate_linear_draws, default_mi_draws, run_mi, run_monte_carlo_gaussian
from .posterior import PosteriorSamples, read_samples, sidecar_path, write_samples

__all__ = [
    "fit",
    "fit_true_exposure",
    "run_gibbs",
    "run_chain",
    "update_regression",
    "update_sigma2",
    "update_dispersion_r",
    "parameter_names",
    "run_monte_carlo_gaussian",
    "run_mi",
    "default_mi_draws",
    "conjugate_linear_draws",
    "PosteriorSamples",
    "write_samples",
    "read_samples",
    "sidecar_path",
    "GewekeReport",
    "geweke_diagnostic",
    "geweke_z",
    "batch_means_variance",
]

from .augmentation import augmentation_quantities, whitened_residual_target
from .data import (
    FAMILIES,
    ChainState,
    ExposureEnsemble,
    HealthDataset,
    TransformRecord,
    row_summary,
    standardize_ensemble,
)
from .io import read_ensemble, read_health_dataset, write_ensemble, write_health_dataset
from .specs import LATENT_METHODS, MethodName, MethodSpec, PriorSpec, SamplerConfig

__all__ = [
    "FAMILIES",
    "ExposureEnsemble",
    "HealthDataset",
    "ChainState",
    "TransformRecord",
    "row_summary",
    "standardize_ensemble",
    "augmentation_quantities",
    "whitened_residual_target",
    "MethodName",
    "MethodSpec",
    "PriorSpec",
    "SamplerConfig",
    "LATENT_METHODS",
    "read_ensemble",
    "write_ensemble",
    "read_health_dataset",
    "write_health_dataset",
]

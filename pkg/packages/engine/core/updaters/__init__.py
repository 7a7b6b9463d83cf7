from .exposure_updaters import (
    ExposureUpdater,
    UpdaterWorkspace,
    assign_z_mia,
    build_updater,
    log_column_weights_du,
    log_mixture_weights_mkde,
    log_mixture_weights_ukde,
    mi_schedule,
    plugin_exposure,
    prepare_ensemble,
    update_z_du,
    update_z_mkde,
    update_z_mvn,
    update_z_ukde,
)

__all__ = [
    "UpdaterWorkspace",
    "ExposureUpdater",
    "build_updater",
    "prepare_ensemble",
    "update_z_mvn",
    "update_z_ukde",
    "update_z_mkde",
    "update_z_du",
    "assign_z_mia",
    "plugin_exposure",
    "mi_schedule",
    "log_mixture_weights_ukde",
    "log_mixture_weights_mkde",
    "log_column_weights_du",
]

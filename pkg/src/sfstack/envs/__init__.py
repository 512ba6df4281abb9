from .lander import LanderConfig, LanderEnv, LanderState, secondary_controller
from .inspection import (
    InspectionConfig,
    InspectionEnv,
    DeputyState,
    PointCloud,
    cw_step,
    cw_transition_matrices,
    fibonacci_sphere,
    rta_filter,
    update_inspection,
)

__all__ = [
    "LanderConfig",
    "LanderEnv",
    "LanderState",
    "secondary_controller",
    "InspectionConfig",
    "InspectionEnv",
    "DeputyState",
    "PointCloud",
    "cw_step",
    "cw_transition_matrices",
    "fibonacci_sphere",
    "rta_filter",
    "update_inspection",
]

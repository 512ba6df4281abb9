"""Stacked successor-feature agents with intervening safety controllers."""

__version__ = "0.1.0"

from .sfcore import (
    FeatureVector,
    SfVector,
    TaskSamplerConfig,
    TaskWeights,
    composite_reward,
    monte_carlo_sf,
    normalize_weights,
    sample_task_alternatives,
)

__all__ = [
    "FeatureVector",
    "SfVector",
    "TaskSamplerConfig",
    "TaskWeights",
    "composite_reward",
    "monte_carlo_sf",
    "normalize_weights",
    "sample_task_alternatives",
    "__version__",
]

from .layers import Dense, Mlp, StackedDense, StackedMlp
from .policy import GaussianPolicy, SquashedGaussianHead
from .optim import Adam, TemperatureParam, polyak_update
from .checkpoint import load_checkpoint, load_into, save_checkpoint

__all__ = [
    "Dense",
    "Mlp",
    "StackedDense",
    "StackedMlp",
    "GaussianPolicy",
    "SquashedGaussianHead",
    "Adam",
    "TemperatureParam",
    "polyak_update",
    "save_checkpoint",
    "load_checkpoint",
    "load_into",
]

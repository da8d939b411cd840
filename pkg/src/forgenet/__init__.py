"""forgenet: a deliberately small CNN for spotting forged face videos.

Four convolution blocks (conv 3x3, batch norm, ReLU), a single-unit dense
head with a clamped sigmoid, Adam on binary cross-entropy. Everything runs
on plain numpy arrays so each layer stays inspectable and the whole model
fits in a weights file small enough to diff.
"""

__version__ = "0.1.0"

from .model import Network, NetworkConfig, build, count_parameters
from .trainer import TrainConfig, train

__all__ = [
    "Network",
    "NetworkConfig",
    "TrainConfig",
    "build",
    "count_parameters",
    "train",
    "__version__",
]

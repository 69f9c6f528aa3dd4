from .checkpoint import Checkpoint, CheckpointError
from .network import REFERENCE_LAYERS, CnnSpec, Network, forward
from .training import TrainConfig, adapt_first_layer, gradient_check, train

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "CnnSpec",
    "Network",
    "REFERENCE_LAYERS",
    "TrainConfig",
    "adapt_first_layer",
    "forward",
    "gradient_check",
    "train",
]

"""pathroute: dynamic-routing image restoration.

A multi-path restoration CNN whose per-region path choices come from a
small policy network trained by REINFORCE with a difficulty-regulated
reward, together with the degradation synthesis, tiled inference,
compute accounting and CLI around it.
"""

from .autograd import Parameter, Tensor, no_grad
from .errors import ConfigError, NumericError, UsageError
from .kernels import BACKEND
from .model import ModelConfig, MultiPathRestorer, RouteTrace, count_flops
from .reward import RewardConfig
from .trainer import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "ModelConfig",
    "MultiPathRestorer",
    "NumericError",
    "Parameter",
    "RewardConfig",
    "RouteTrace",
    "Tensor",
    "TrainConfig",
    "UsageError",
    "count_flops",
    "no_grad",
    "__version__",
]

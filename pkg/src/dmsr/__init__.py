"""dmsr: MRI super-resolution built on selective state-space scans,
modulated deformable convolution, and a self-contained autodiff core."""

__version__ = "0.1.0"

from .tensor import (  # noqa: F401
    ConfigError, ContractError, DimensionError, DomainError, NumericError,
    Tensor, backward, no_grad, set_debug_checks,
)
from .network import DeformMambaNet, ModelConfig, preset  # noqa: F401
from .train import TrainConfig, ablate, evaluate, infer, train  # noqa: F401

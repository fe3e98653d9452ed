"""Self-contained numpy autodiff, the forecaster, its training loop and MLP baselines."""
from .autograd import NonFiniteError, Tensor
from .baselines import mlp_all_to_all, mlp_all_to_one
from .model import CdtModel, ModelConfig, build_segment_mask, load_checkpoint, save_checkpoint
from .train import DivergenceError, TrainConfig, TrainResult, evaluate, grad_check, train

__all__ = [
    "CdtModel",
    "DivergenceError",
    "ModelConfig",
    "NonFiniteError",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "build_segment_mask",
    "evaluate",
    "grad_check",
    "load_checkpoint",
    "mlp_all_to_all",
    "mlp_all_to_one",
    "save_checkpoint",
    "train",
]

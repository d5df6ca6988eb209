"""
PIT core - autodiff engine, dilation masks, layers, losses and the trainer
"""

from .tensor import Tensor, Tape, ShapeError, NonFiniteError, TapeError, backward
from .masks import MaskSpec, GammaSet, MaskError, compute_L, extract_dilation, slice_weight
from .config import NetworkConfig, NetworkConfigError, TrainConfig, Task, LossKind
from .layers import Network, PitConvLayer, ExportedModel, build_network, export_extracted, count_params
from .losses import RegularizerConfig, size_regularizer, performance_loss, total_loss
from .events import Event, EventType, TrainingCallback
from .state import Phase, TrainState, AdamState
from .trainer import TrainedResult, TrainingDivergedError, run_pit, train_fixed, resume_pit
from .gradcheck import GradCheckReport, gradient_check, run_gradcheck_suite

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "MaskSpec",
    "GammaSet",
    "NetworkConfig",
    "TrainConfig",
    "Network",
    "PitConvLayer",
    "build_network",
    "export_extracted",
    "count_params",
    "size_regularizer",
    "performance_loss",
    "Event",
    "EventType",
    "TrainingCallback",
    "TrainState",
    "run_pit",
    "train_fixed",
    "resume_pit",
    "gradient_check",
    "run_gradcheck_suite",
]

"""
PIT Framework - learn the dilations of temporal convolutional networks by
pruning in time
"""

# Core imports
from pit_framework.core import (
    Tensor,
    Tape,
    NetworkConfig,
    TrainConfig,
    Network,
    build_network,
    export_extracted,
    count_params,
    TrainingCallback,
    Event,
    EventType,
)

from pit_framework.core.trainer import (
    TrainedResult,
    TrainingDivergedError,
    run_pit,
    train_fixed,
    resume_pit,
    evaluate,
)

from pit_framework.data import (
    Dataset,
    DatasetError,
    generate_teacher_dataset,
    generate_multiscale_dataset,
    teacher_config,
)

from pit_framework.extensions.explorer import (
    SweepConfig,
    ParetoPoint,
    SweepError,
    run_sweep,
    pareto_front,
    emit_report,
)

__version__ = "0.1.0"

__all__ = [
    # Core
    "Tensor",
    "Tape",
    "NetworkConfig",
    "TrainConfig",
    "Network",
    "build_network",
    "export_extracted",
    "count_params",
    "TrainingCallback",
    "Event",
    "EventType",
    # Training
    "TrainedResult",
    "TrainingDivergedError",
    "run_pit",
    "train_fixed",
    "resume_pit",
    "evaluate",
    # Data
    "Dataset",
    "DatasetError",
    "generate_teacher_dataset",
    "generate_multiscale_dataset",
    "teacher_config",
    # Exploration
    "SweepConfig",
    "ParetoPoint",
    "SweepError",
    "run_sweep",
    "pareto_front",
    "emit_report",
]

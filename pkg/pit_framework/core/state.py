"""
Mutable training state: phase machine, counters and optimizer moments
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np


class Phase(str, Enum):
    WARMUP = "warmup"
    PRUNING = "pruning"
    FINETUNE = "finetune"
    DONE = "done"

    @property
    def order(self) -> int:
        return list(Phase).index(self)


@dataclass
class AdamState:
    """First and second moments plus a step count per named parameter"""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: Dict[str, int] = field(default_factory=dict)


@dataclass
class TrainState:
    """Where a run is and what it has seen; everything needed to resume it"""
    phase: Phase = Phase.WARMUP
    step: int = 0
    phase_step: int = 0
    epoch: int = 0
    phase_epoch: int = 0
    best_val_loss: float = math.inf
    epochs_since_improvement: int = 0
    history: Dict[str, List[float]] = field(
        default_factory=lambda: {phase.value: [] for phase in (Phase.WARMUP, Phase.PRUNING, Phase.FINETUNE)}
    )
    rng_state: Optional[Dict[str, Any]] = None
    optimizer: AdamState = field(default_factory=AdamState)

    def advance(self, phase: Phase) -> None:
        """Move to a later phase; per-phase counters and the patience monitor restart"""
        if phase.order <= self.phase.order:
            raise RuntimeError(f"Phase can only move forward: {self.phase.value} -> {phase.value}")
        self.phase = phase
        self.phase_step = 0
        self.phase_epoch = 0
        self.best_val_loss = math.inf
        self.epochs_since_improvement = 0

"""
The three-phase search: warmup, pruning with trainable gammas, then
fine-tuning of the frozen architecture
"""
import logging
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import tensor as T
from .config import LossKind, NetworkConfig, Task, TrainConfig
from .events import Event, EventType, TrainingCallback
from .layers import Network, count_params
from .losses import RegularizerConfig, performance_loss, size_regularizer, total_loss, weight_decay_loss
from .masks import GammaSet
from .seeding import Component, generator
from .state import AdamState, Phase, TrainState
from .tensor import NonFiniteError, Tensor
from ..data.dataset import Dataset, DatasetError, Split, iter_batches
from ..extensions.checkpoint import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Non-finite loss or gradient; a diagnostic checkpoint was written first"""

    def __init__(self, message: str, checkpoint_path: Optional[Path] = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass
class TrainedResult:
    net: Network
    dilations: Tuple[int, ...]
    history: Dict[str, List[float]]
    final_val_loss: float
    params: int
    state: TrainState
    checkpoint_path: Optional[Path] = None


# ============== Optimizer ==============

def optimizer_step(
    params: Dict[str, Tensor],
    opt: AdamState,
    lr: float,
    gamma_sets: Optional[Dict[str, GammaSet]] = None,
) -> None:
    """
    One bias-corrected Adam update of every parameter that requires grad.
    Gamma vectors are projected back into [0, 1] with gamma_0 pinned to 1.
    """
    gamma_sets = gamma_sets or {}
    active = [(name, p) for name, p in params.items() if p.requires_grad and p.grad is not None]
    for name, p in active:
        if p.grad.shape != p.shape:
            raise T.ShapeError(f"Gradient of {name} has shape {p.grad.shape}, expected {p.shape}")
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"Gradient of {name} is not finite")

    for name, p in active:
        grad = p.grad
        if name in gamma_sets:
            grad = grad.copy()
            grad[0] = 0.0
        m = opt.beta1 * opt.m.get(name, np.zeros_like(p.data)) + (1.0 - opt.beta1) * grad
        v = opt.beta2 * opt.v.get(name, np.zeros_like(p.data)) + (1.0 - opt.beta2) * grad * grad
        t = opt.t.get(name, 0) + 1
        m_hat = m / (1.0 - opt.beta1 ** t)
        v_hat = v / (1.0 - opt.beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + opt.eps)
        opt.m[name], opt.v[name], opt.t[name] = m, v, t
        if name in gamma_sets:
            gamma_sets[name].project()


# ============== Monitoring ==============

def check_convergence(state: TrainState, val_loss: float, patience: int) -> bool:
    """Record a validation loss; True once `patience` epochs pass without strict improvement"""
    if not math.isfinite(val_loss):
        raise NonFiniteError(f"Validation loss is not finite: {val_loss}")
    if val_loss < state.best_val_loss:
        state.best_val_loss = val_loss
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
    return state.epochs_since_improvement >= patience


def freeze_gammas(net: Network) -> None:
    for gamma in net.gamma_sets():
        if not gamma.frozen:
            gamma.freeze()


def evaluate(net: Network, inputs: np.ndarray, targets: np.ndarray, kind: Union[LossKind, str]) -> float:
    """Performance loss over a whole split; nothing is recorded"""
    pred = net(Tensor(inputs))
    return performance_loss(pred, targets, kind).item()


# ============== Training loop ==============

def _check_data(config: NetworkConfig, data: Dataset) -> None:
    for split in (Split.TRAIN, Split.VAL):
        if data.count(split) == 0:
            raise DatasetError(f"The {split.name.lower()} split is empty")
    if Task(data.task) != config.task:
        raise DatasetError(f"Dataset task {data.task.value} does not match network task {config.task.value}")
    if config.input_channels is not None and data.inputs.shape[1] != config.input_channels:
        raise DatasetError(
            f"Dataset has {data.inputs.shape[1]} input channels, network expects {config.input_channels}"
        )


class _Run:
    """One training run driven as a state machine over TrainState.phase"""

    def __init__(
        self,
        net: Network,
        data: Dataset,
        cfg: TrainConfig,
        search: bool,
        callbacks: Optional[TrainingCallback],
        state: Optional[TrainState],
    ):
        self.net = net
        self.cfg = cfg
        self.search = search
        self.callbacks = callbacks or TrainingCallback()
        self.kind = net.config.loss
        self.train_x, self.train_y = data.subset(Split.TRAIN)
        self.val_x, self.val_y = data.subset(Split.VAL)
        self.steps_per_epoch = math.ceil(len(self.train_x) / cfg.batch_size)
        self.finetune_cap = cfg.finetune_cap(self.steps_per_epoch)
        self.reg_cfg = RegularizerConfig(cfg.lambda_)
        # without a size penalty the gammas stay at 1 and the run is plain training
        self.learn_gammas = search and cfg.lambda_ > 0

        self.rng = generator(cfg.rng_seed, Component.DATA_ORDER)
        self.state = state or TrainState()
        if self.state.rng_state is not None:
            self.rng.bit_generator.state = self.state.rng_state
        self.gamma_map = dict(zip(net.gamma_parameters(), net.gamma_sets()))
        self.last_checkpoint: Optional[Path] = None

    # ---- helpers ----

    def _emit(self, event_type: EventType, content=None, **metadata) -> None:
        self.callbacks.emit(Event(event_type, content, metadata=metadata))

    def _configure(self) -> None:
        """Trainable flags for the current phase"""
        self.net.set_weights_trainable(True)
        self.net.set_gamma_trainable(self.state.phase == Phase.PRUNING and self.learn_gammas)

    def _params(self) -> Dict[str, Tensor]:
        return {**self.net.parameters(), **self.net.gamma_parameters()}

    def _step(self, xb: np.ndarray, yb: np.ndarray) -> float:
        params = self._params()
        for p in params.values():
            p.zero_grad()
        with T.Tape():
            perf = performance_loss(self.net(Tensor(xb)), yb, self.kind)
            loss = perf
            if self.state.phase == Phase.PRUNING and self.learn_gammas:
                loss = total_loss(perf, size_regularizer(self.net, self.reg_cfg))
            decay = weight_decay_loss(self.net, self.cfg.weight_decay)
            if decay is not None:
                loss = T.add(loss, decay)
            T.backward(loss)
        optimizer_step(params, self.state.optimizer, self.cfg.learning_rate, self.gamma_map)
        self.state.step += 1
        self.state.phase_step += 1
        return perf.item()

    def _epoch(self, max_steps: Optional[int] = None) -> float:
        """One pass over the training split (or fewer steps); returns the validation loss"""
        taken = 0
        for xb, yb in iter_batches(self.train_x, self.train_y, self.cfg.batch_size, self.rng):
            if max_steps is not None and taken >= max_steps:
                break
            self._step(xb, yb)
            taken += 1
        self.state.epoch += 1
        self.state.phase_epoch += 1
        val_loss = evaluate(self.net, self.val_x, self.val_y, self.kind)
        self.state.history[self.state.phase.value].append(val_loss)
        logger.debug(
            f"{self.state.phase.value} epoch {self.state.phase_epoch}: val_loss={val_loss:.6g} "
            f"({taken} steps)"
        )
        self._emit(
            EventType.EPOCH_END,
            val_loss,
            phase=self.state.phase.value,
            epoch=self.state.phase_epoch,
            step=self.state.step,
        )
        return val_loss

    def _checkpoint(self, name: str = "latest", directory: Optional[Union[str, Path]] = None) -> Optional[Path]:
        directory = directory or self.cfg.checkpoint_dir
        if directory is None:
            return None
        self.state.rng_state = self.rng.bit_generator.state
        path = save_checkpoint(directory, self.net, self.state, self.cfg, name=name, search=self.search)
        if name == "latest" and self.cfg.keep_all_checkpoints:
            save_checkpoint(
                directory,
                self.net,
                self.state,
                self.cfg,
                name=f"{self.state.phase.value}-epoch-{self.state.epoch:04d}",
                search=self.search,
            )
        self.last_checkpoint = path
        self._emit(EventType.CHECKPOINT_SAVED, str(path), phase=self.state.phase.value, epoch=self.state.epoch)
        return path

    def _enter(self, phase: Phase) -> None:
        self._emit(EventType.PHASE_END, self.state.phase.value, epochs=self.state.phase_epoch)
        self.state.advance(phase)
        if phase != Phase.DONE:
            logger.info(f"Entering phase {phase.value} at step {self.state.step}")
            self._emit(EventType.PHASE_START, phase.value, step=self.state.step)

    # ---- phases ----

    def _warmup(self) -> None:
        """Exactly steps_wu weight-only updates, cycling over shuffled epochs"""
        remaining = self.cfg.steps_wu - self.state.phase_step
        while remaining > 0:
            for xb, yb in iter_batches(self.train_x, self.train_y, self.cfg.batch_size, self.rng):
                self._step(xb, yb)
                remaining -= 1
                if remaining == 0:
                    break
        if self.cfg.steps_wu > 0:
            val_loss = evaluate(self.net, self.val_x, self.val_y, self.kind)
            self.state.history[Phase.WARMUP.value].append(val_loss)
            logger.info(f"Warmup finished after {self.cfg.steps_wu} steps: val_loss={val_loss:.6g}")
        self._enter(Phase.PRUNING)

    def _pruning(self) -> None:
        before = self.net.dilations()
        val_loss = self._epoch()
        after = self.net.dilations()
        if after != before:
            logger.info(f"Dilations changed {before} -> {after} at epoch {self.state.phase_epoch}")
            self._emit(EventType.GAMMA_UPDATE, list(after), previous=list(before), epoch=self.state.phase_epoch)

        stop = check_convergence(self.state, val_loss, self.cfg.patience_epochs)
        if self.cfg.max_epochs is not None and self.state.phase_epoch >= self.cfg.max_epochs:
            stop = True
        if stop:
            freeze_gammas(self.net)
            logger.info(
                f"Phase pruning finished after {self.state.phase_epoch} epochs; dilations {self.net.dilations()}"
            )
            self._enter(Phase.FINETUNE)

    def _finetune(self) -> None:
        remaining = self.finetune_cap - self.state.phase_step
        if remaining <= 0:
            self._enter(Phase.DONE)
            return
        val_loss = self._epoch(max_steps=remaining)
        stop = check_convergence(self.state, val_loss, self.cfg.patience_epochs)
        if stop or self.state.phase_step >= self.finetune_cap:
            logger.info(f"Phase finetune finished after {self.state.phase_epoch} epochs")
            self._enter(Phase.DONE)

    def run(self) -> TrainedResult:
        if self.state.step == 0 and self.state.phase == Phase.WARMUP:
            self._emit(EventType.RUN_START, self.net.config.name, search=self.search, lambda_=self.cfg.lambda_)
            self._emit(EventType.PHASE_START, Phase.WARMUP.value, step=0)
        handlers = {Phase.WARMUP: self._warmup, Phase.PRUNING: self._pruning, Phase.FINETUNE: self._finetune}
        try:
            while self.state.phase != Phase.DONE:
                self._configure()
                handlers[self.state.phase]()
                self._checkpoint()
        except NonFiniteError as e:
            directory = self.cfg.checkpoint_dir or tempfile.mkdtemp(prefix="pit-diverged-")
            path = self._checkpoint(name="diverged", directory=directory)
            logger.error(f"Training diverged in phase {self.state.phase.value} at step {self.state.step}: {e}")
            self._emit(EventType.RUN_ERROR, str(e), checkpoint=str(path))
            raise TrainingDivergedError(f"Training diverged: {e} (diagnostic checkpoint at {path})", path) from e

        self.net.set_weights_trainable(False)
        final = evaluate(self.net, self.val_x, self.val_y, self.kind)
        result = TrainedResult(
            net=self.net,
            dilations=self.net.dilations(),
            history=self.state.history,
            final_val_loss=final,
            params=count_params(self.net),
            state=self.state,
            checkpoint_path=self.last_checkpoint,
        )
        logger.info(f"Run complete: dilations={result.dilations} params={result.params} val_loss={final:.6g}")
        self._emit(EventType.RUN_COMPLETE, final, dilations=list(result.dilations), params=result.params)
        return result


def run_pit(
    net: Network,
    data: Dataset,
    cfg: TrainConfig,
    callbacks: Optional[TrainingCallback] = None,
    resume: Optional[TrainState] = None,
) -> TrainedResult:
    """
    Warmup (weights only, performance loss) -> pruning (weights and gammas
    on performance + size loss, early-stopped on validation performance)
    -> freeze gammas -> fine-tune (weights only, capped by steps_ft).
    """
    net.config.check(require_pit=True)
    _check_data(net.config, data)
    for gamma in net.gamma_sets():
        gamma.delta = cfg.delta
    return _Run(net, data, cfg, search=True, callbacks=callbacks, state=resume).run()


def train_fixed(
    net: Network,
    data: Dataset,
    cfg: TrainConfig,
    callbacks: Optional[TrainingCallback] = None,
    resume: Optional[TrainState] = None,
) -> TrainedResult:
    """Same schedule as run_pit with the gammas never updated"""
    _check_data(net.config, data)
    return _Run(net, data, cfg, search=False, callbacks=callbacks, state=resume).run()


def resume_pit(
    checkpoint_dir: Union[str, Path],
    data: Dataset,
    cfg: Optional[TrainConfig] = None,
    callbacks: Optional[TrainingCallback] = None,
) -> TrainedResult:
    """Continue a run from a checkpoint directory"""
    checkpoint = load_checkpoint(checkpoint_dir)
    net = checkpoint.restore_network()
    cfg = cfg or checkpoint.train_config
    callbacks = callbacks or TrainingCallback()
    callbacks.emit(Event(EventType.CHECKPOINT_LOADED, str(checkpoint.path), metadata={"epoch": checkpoint.state.epoch}))
    runner = run_pit if checkpoint.search else train_fixed
    return runner(net, data, cfg, callbacks=callbacks, resume=checkpoint.state)

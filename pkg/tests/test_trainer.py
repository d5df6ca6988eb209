"""
Tests for the optimizer, convergence monitor and the three-phase search
"""
import math

import numpy as np
import pytest

from pit_framework.core.config import Activation, NetworkConfig, PitConvSpec, TrainConfig
from pit_framework.core.events import EventType, TrainingCallback
from pit_framework.core.layers import build_network
from pit_framework.core.state import AdamState, Phase, TrainState
from pit_framework.core.tensor import NonFiniteError, Tensor
from pit_framework.core.trainer import (
    TrainingDivergedError,
    check_convergence,
    freeze_gammas,
    optimizer_step,
    resume_pit,
    run_pit,
    train_fixed,
)
from pit_framework.data.dataset import Dataset, DatasetError
from pit_framework.extensions.checkpoint import load_checkpoint


def _cfg(**overrides) -> TrainConfig:
    values = dict(steps_wu=3, steps_ft=4, batch_size=8, patience_epochs=2, max_epochs=3, rng_seed=5)
    values.update(overrides)
    return TrainConfig(**values)


def _assert_same_state(a, b):
    assert a.keys() == b.keys()
    for name in a:
        assert a[name].tobytes() == b[name].tobytes(), name


class TestOptimizerStep:
    def test_first_step_moves_by_lr(self):
        w = Tensor([2.0], requires_grad=True)
        w.grad = np.array([1.0])
        optimizer_step({"w": w}, AdamState(), lr=1e-3)
        assert w.data[0] == pytest.approx(2.0 - 1e-3)

    def test_zero_gradient_is_a_fixed_point(self):
        w = Tensor([0.3, -0.7], requires_grad=True)
        opt = AdamState()
        optimizer_step({"w": w}, opt, lr=1e-2)
        assert w.data.tolist() == [0.3, -0.7]
        assert opt.t["w"] == 1

    def test_gamma_is_projected(self):
        net = build_network(NetworkConfig(layers=[PitConvSpec(c_in=1, c_out=1, rf_max=9)]), rng_seed=0)
        gamma = net.gamma_sets()[0]
        gamma.g_hat.data[:] = [1.0, 0.9, 0.01, 1.0]
        gamma.set_trainable(True)
        gamma.g_hat.grad[:] = [5.0, 1.0, 1.0, -1.0]
        gamma_map = dict(zip(net.gamma_parameters(), net.gamma_sets()))
        optimizer_step(net.gamma_parameters(), AdamState(), lr=0.1, gamma_sets=gamma_map)
        assert gamma.g_hat.data[0] == 1.0
        assert gamma.g_hat.data[2] == 0.0
        assert gamma.g_hat.data[3] == 1.0
        assert gamma.g_hat.data[1] == pytest.approx(0.8)

    def test_non_finite_gradient_leaves_params_alone(self):
        a = Tensor([1.0], requires_grad=True)
        b = Tensor([1.0], requires_grad=True)
        a.grad = np.array([0.5])
        b.grad = np.array([np.nan])
        with pytest.raises(NonFiniteError):
            optimizer_step({"a": a, "b": b}, AdamState(), lr=0.1)
        assert a.data[0] == 1.0

    def test_skips_frozen_parameters(self):
        w = Tensor([1.0])
        optimizer_step({"w": w}, AdamState(), lr=0.1)
        assert w.data[0] == 1.0


class TestConvergence:
    def test_still_improving(self):
        state = TrainState()
        assert [check_convergence(state, v, 2) for v in (1.0, 0.9, 0.8)] == [False, False, False]

    def test_stall_stops(self):
        state = TrainState()
        flags = [check_convergence(state, v, 3) for v in (0.8, 0.81, 0.81, 0.81)]
        assert flags == [False, False, False, True]

    def test_equal_loss_is_not_an_improvement(self):
        state = TrainState()
        flags = [check_convergence(state, v, 2) for v in (1.0, 1.0, 0.9, 0.95, 0.95)]
        assert flags == [False, False, False, False, True]
        assert state.best_val_loss == 0.9

    def test_improvement_on_last_epoch_resets(self):
        state = TrainState()
        for v in (1.0, 1.1):
            check_convergence(state, v, 2)
        assert not check_convergence(state, 0.5, 2)
        assert state.epochs_since_improvement == 0

    def test_non_finite(self):
        with pytest.raises(NonFiniteError):
            check_convergence(TrainState(), math.nan, 2)

    def test_phases_only_move_forward(self):
        state = TrainState()
        state.advance(Phase.PRUNING)
        with pytest.raises(RuntimeError):
            state.advance(Phase.WARMUP)


class TestFreeze:
    def test_freeze_at_binarized_values(self):
        net = build_network(NetworkConfig(layers=[PitConvSpec(c_in=1, c_out=1, rf_max=9)]), rng_seed=0)
        gamma = net.gamma_sets()[0]
        gamma.g_hat.data[:] = [1.0, 0.7, 0.4, 0.2]
        freeze_gammas(net)
        assert gamma.frozen
        assert net.dilations() == (4,)
        assert not gamma.g_hat.requires_grad


class TestRunPit:
    def test_lambda_zero_matches_plain_training(self, tiny_config, teacher_data):
        cfg = _cfg(lambda_=0.0)
        searched = run_pit(build_network(tiny_config, rng_seed=5), teacher_data, cfg)
        plain = train_fixed(build_network(tiny_config, rng_seed=5), teacher_data, cfg)
        assert searched.dilations == (1,)
        _assert_same_state(
            {k: v.data for k, v in searched.net.parameters().items()},
            {k: v.data for k, v in plain.net.parameters().items()},
        )
        assert searched.history == plain.history
        assert searched.final_val_loss == plain.final_val_loss

    def test_lambda_zero_never_prunes_in_long_runs(self, tiny_config, teacher_data):
        cfg = TrainConfig(
            lambda_=0.0,
            steps_wu=5,
            steps_ft=7,
            batch_size=4,
            learning_rate=5e-3,
            patience_epochs=50,
            max_epochs=40,
            rng_seed=3,
        )
        searched = run_pit(build_network(tiny_config, rng_seed=3), teacher_data, cfg)
        plain = train_fixed(build_network(tiny_config, rng_seed=3), teacher_data, cfg)

        assert len(searched.history["pruning"]) == 40
        assert searched.dilations == (1,)
        assert searched.net.gamma_sets()[0].g_hat.data.tolist() == [1.0] * 4
        assert searched.params == plain.params
        _assert_same_state(searched.net.state_dict(), plain.net.state_dict())
        assert searched.history == plain.history

    def test_large_lambda_saturates(self, tiny_config, teacher_data):
        cfg = TrainConfig(
            lambda_=1e3,
            steps_wu=0,
            steps_ft=1,
            batch_size=4,
            learning_rate=0.05,
            patience_epochs=3,
            max_epochs=20,
        )
        result = run_pit(build_network(tiny_config, rng_seed=0), teacher_data, cfg)
        assert result.dilations == (8,)
        assert result.params == 1 * 1 * 2 + 1

    def test_deterministic(self, tiny_config, teacher_data):
        cfg = _cfg(lambda_=0.05)
        a = run_pit(build_network(tiny_config, rng_seed=1), teacher_data, cfg)
        b = run_pit(build_network(tiny_config, rng_seed=1), teacher_data, cfg)
        _assert_same_state(a.net.state_dict(), b.net.state_dict())
        assert a.history == b.history
        assert a.dilations == b.dilations

    def test_phase_isolation(self, tiny_config, teacher_data):
        net = build_network(tiny_config, rng_seed=2)
        snapshots = {}

        def snapshot(event):
            snapshots[(event.type, event.content)] = net.gamma_sets()[0].g_hat.data.copy()

        callbacks = TrainingCallback().on_phase(snapshot)
        result = run_pit(net, teacher_data, _cfg(lambda_=0.1), callbacks=callbacks)
        assert snapshots[(EventType.PHASE_END, "warmup")].tolist() == [1.0] * 4
        finetune_start = snapshots[(EventType.PHASE_START, "finetune")]
        assert np.array_equal(result.net.gamma_sets()[0].g_hat.data, finetune_start)
        g_hat = result.net.gamma_sets()[0].g_hat.data
        assert g_hat[0] == 1.0
        assert np.all((g_hat >= 0.0) & (g_hat <= 1.0))

    def test_history_and_events(self, tiny_config, teacher_data, tmp_path):
        seen = []
        callbacks = TrainingCallback().on_any(lambda event: seen.append(event.type))
        cfg = _cfg(lambda_=0.01, checkpoint_dir=str(tmp_path))
        result = run_pit(build_network(tiny_config, rng_seed=0), teacher_data, cfg, callbacks=callbacks)

        assert len(result.history["warmup"]) == 1
        assert 1 <= len(result.history["pruning"]) <= 3
        assert len(result.history["finetune"]) >= 1
        assert seen[0] == EventType.RUN_START
        assert seen[-1] == EventType.RUN_COMPLETE
        assert EventType.CHECKPOINT_SAVED in seen
        assert result.checkpoint_path == tmp_path / "latest"
        assert result.state.phase == Phase.DONE

    def test_no_warmup_records_no_warmup_loss(self, tiny_config, teacher_data):
        result = run_pit(build_network(tiny_config, rng_seed=0), teacher_data, _cfg(steps_wu=0))
        assert result.history["warmup"] == []

    def test_finetune_cap(self, tiny_config, teacher_data):
        starts = {}
        callbacks = TrainingCallback().on(
            EventType.PHASE_START, lambda event: starts.setdefault(event.content, event.metadata["step"])
        )
        result = run_pit(build_network(tiny_config, rng_seed=0), teacher_data, _cfg(steps_ft=6), callbacks=callbacks)
        # four steps per epoch: one full epoch then a two-step partial one
        assert result.state.step - starts["finetune"] == 6
        assert len(result.history["finetune"]) == 2

    def test_requires_pit_layer(self, teacher_data):
        config = NetworkConfig(layers=[{"kind": "conv", "c_in": 1, "c_out": 1, "kernel_size": 9}])
        with pytest.raises(ValueError):
            run_pit(build_network(config, rng_seed=0), teacher_data, _cfg())

    def test_empty_validation_split(self, tiny_config, teacher_data):
        data = Dataset(
            inputs=teacher_data.inputs,
            targets=teacher_data.targets,
            split=np.zeros(len(teacher_data), dtype=np.uint8),
        )
        with pytest.raises(DatasetError, match="val"):
            run_pit(build_network(tiny_config, rng_seed=0), data, _cfg())

    def test_channel_mismatch(self, teacher_data):
        config = NetworkConfig(layers=[PitConvSpec(c_in=2, c_out=1, rf_max=9, activation=Activation.NONE)])
        with pytest.raises(DatasetError):
            run_pit(build_network(config, rng_seed=0), teacher_data, _cfg())


class TestDivergence:
    def test_diagnostic_checkpoint(self, tiny_config, teacher_data, tmp_path):
        cfg = _cfg(learning_rate=1e300, checkpoint_dir=str(tmp_path))
        errors = []
        callbacks = TrainingCallback().on_error(lambda event: errors.append(event))
        with pytest.raises(TrainingDivergedError) as info:
            run_pit(build_network(tiny_config, rng_seed=0), teacher_data, cfg, callbacks=callbacks)
        path = info.value.checkpoint_path
        assert path == tmp_path / "diverged"
        assert load_checkpoint(path).state.phase == Phase.WARMUP
        assert len(errors) == 1


class TestResume:
    def test_resume_mid_pruning_is_bitwise(self, tiny_config, teacher_data, tmp_path):
        cfg = _cfg(steps_wu=5, lambda_=0.05, checkpoint_dir=str(tmp_path / "a"), keep_all_checkpoints=True)
        full = run_pit(build_network(tiny_config, rng_seed=9), teacher_data, cfg)

        middle = tmp_path / "a" / "pruning-epoch-0001"
        assert load_checkpoint(middle).state.phase == Phase.PRUNING
        resumed = resume_pit(
            middle,
            teacher_data,
            cfg.model_copy(update={"checkpoint_dir": str(tmp_path / "b"), "keep_all_checkpoints": False}),
        )
        _assert_same_state(full.net.state_dict(), resumed.net.state_dict())
        assert resumed.history == full.history
        assert resumed.dilations == full.dilations
        assert resumed.final_val_loss == full.final_val_loss

    def test_resume_from_finished_run(self, tiny_config, teacher_data, tmp_path):
        cfg = _cfg(checkpoint_dir=str(tmp_path))
        full = run_pit(build_network(tiny_config, rng_seed=4), teacher_data, cfg)
        again = resume_pit(tmp_path, teacher_data)
        assert again.state.phase == Phase.DONE
        _assert_same_state(full.net.state_dict(), again.net.state_dict())

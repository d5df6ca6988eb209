"""
Tests for checkpoints, exported bundles and run summaries
"""
import numpy as np
import orjson
import pytest

from pit_framework.core.config import NetworkConfig, TrainConfig
from pit_framework.core.layers import apply_dilations, build_network, export_extracted
from pit_framework.core.seeding import Component, generator
from pit_framework.core.state import Phase, TrainState
from pit_framework.core.tensor import Tensor
from pit_framework.extensions.checkpoint import (
    CheckpointError,
    decode_rng_state,
    encode_rng_state,
    load_checkpoint,
    pack_arrays,
    save_checkpoint,
    unpack_arrays,
)
from pit_framework.extensions.storage import StorageError, load_bundle, save_bundle, save_summary


class TestBlobs:
    def test_pack_unpack(self, rng):
        arrays = {"a": rng.standard_normal((2, 3)), "b": rng.standard_normal(4)}
        blob, index = pack_arrays(arrays)
        assert len(blob) == 8 * 10
        assert [entry["offset"] for entry in index] == [0, 48]
        restored = unpack_arrays(blob, index)
        for name, value in arrays.items():
            assert restored[name].tobytes() == value.tobytes()

    def test_short_blob(self):
        blob, index = pack_arrays({"a": np.ones(4)})
        with pytest.raises(CheckpointError):
            unpack_arrays(blob[:-8], index)

    def test_rng_state_survives_json(self):
        rng = generator(3, Component.DATA_ORDER)
        rng.standard_normal(5)
        encoded = orjson.loads(orjson.dumps(encode_rng_state(rng.bit_generator.state)))
        clone = generator(0, Component.DATA_ORDER)
        clone.bit_generator.state = decode_rng_state(encoded)
        assert np.array_equal(clone.standard_normal(8), rng.standard_normal(8))


class TestCheckpoint:
    def test_round_trip(self, tmp_path, tiny_config):
        net = build_network(tiny_config, rng_seed=4)
        net.gamma_sets()[0].g_hat.data[:] = [1.0, 0.8, 0.3, 0.6]
        net.gamma_sets()[0].freeze()
        state = TrainState()
        state.advance(Phase.PRUNING)
        state.step, state.epoch, state.best_val_loss = 17, 3, 0.125
        state.history["pruning"] = [0.5, 0.25, 0.125]
        state.optimizer.m["layers.0.weight"] = np.full((1, 1, 9), 0.5)
        state.optimizer.v["layers.0.weight"] = np.full((1, 1, 9), 0.25)
        state.optimizer.t["layers.0.weight"] = 17
        cfg = TrainConfig(lambda_=0.01, steps_wu=5)

        path = save_checkpoint(tmp_path, net, state, cfg, name="mid")
        loaded = load_checkpoint(path)
        assert loaded.state.phase == Phase.PRUNING
        assert loaded.state.step == 17
        assert loaded.state.best_val_loss == 0.125
        assert loaded.state.history == state.history
        assert loaded.state.optimizer.t == {"layers.0.weight": 17}
        assert np.array_equal(loaded.state.optimizer.v["layers.0.weight"], state.optimizer.v["layers.0.weight"])
        assert loaded.train_config == cfg

        restored = loaded.restore_network()
        assert restored.dilations() == (4,)
        assert restored.gamma_sets()[0].frozen
        for name, value in net.state_dict().items():
            assert restored.state_dict()[name].tobytes() == value.tobytes()

    def test_fresh_state_has_no_best_loss(self, tmp_path, tiny_config):
        path = save_checkpoint(tmp_path, build_network(tiny_config, rng_seed=0), TrainState(), TrainConfig())
        manifest = orjson.loads((path / "manifest.json").read_bytes())
        assert manifest["best_val_loss"] is None
        assert load_checkpoint(tmp_path).state.best_val_loss == float("inf")

    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path)

    def test_wrong_version(self, tmp_path, tiny_config):
        path = save_checkpoint(tmp_path, build_network(tiny_config, rng_seed=0), TrainState(), TrainConfig())
        manifest = orjson.loads((path / "manifest.json").read_bytes())
        manifest["version"] = 99
        (path / "manifest.json").write_bytes(orjson.dumps(manifest))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)


class TestBundle:
    def test_round_trip(self, tmp_path, rng, config_dir):
        config = NetworkConfig.load(config_dir / "multiscale_seed.json")
        net = apply_dilations(build_network(config, rng_seed=1), (2, 8, 32))
        model = export_extracted(net)
        loaded = load_bundle(save_bundle(model, tmp_path / "bundle"))
        assert loaded.dilations == (2, 8, 32)
        x = Tensor(rng.standard_normal((4, 1, 40)))
        assert np.array_equal(loaded.to_network()(x).data, net(x).data)
        manifest = orjson.loads((tmp_path / "bundle" / "manifest.json").read_bytes())
        assert manifest["params"] == (1 * 8 * 17 + 8) + (8 * 8 * 5 + 8) + (8 * 8 * 2 + 8) + (8 * 2 + 2)

    def test_missing_bundle(self, tmp_path):
        with pytest.raises(StorageError):
            load_bundle(tmp_path)

    def test_summary(self, tmp_path):
        path = save_summary({"dilations": [1, 2], "loss": np.float64(0.5)}, tmp_path / "out" / "summary.json")
        assert orjson.loads(path.read_bytes()) == {"dilations": [1, 2], "loss": 0.5}

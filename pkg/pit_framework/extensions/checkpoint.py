"""
Trainer checkpoints: a JSON manifest plus flat little-endian float64 blobs
"""
import logging
import math
import os
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import orjson

from ..core.config import NetworkConfig, TrainConfig
from ..core.layers import Network, build_network
from ..core.state import AdamState, Phase, TrainState

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
PARAMS_BLOB = "params.bin"
MOMENTS_BLOB = "moments.bin"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Missing or inconsistent checkpoint"""


# ============== Blob packing ==============

def pack_arrays(arrays: Dict[str, np.ndarray]) -> Tuple[bytes, List[Dict[str, Any]]]:
    """Concatenate arrays as little-endian float64; the index records name, offset and shape"""
    chunks, index, offset = [], [], 0
    for name, array in arrays.items():
        raw = np.ascontiguousarray(array, dtype="<f8").tobytes()
        index.append({"name": name, "offset": offset, "shape": list(array.shape)})
        chunks.append(raw)
        offset += len(raw)
    return b"".join(chunks), index


def unpack_arrays(raw: bytes, index: List[Dict[str, Any]]) -> Dict[str, np.ndarray]:
    arrays = {}
    for entry in index:
        shape = tuple(entry["shape"])
        size = 8 * int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        if start + size > len(raw):
            raise CheckpointError(f"Blob too short for entry {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw[start:start + size], dtype="<f8").astype(np.float64).reshape(shape)
    return arrays


def _write_atomic(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# ============== RNG state ==============

def encode_rng_state(state: Dict[str, Any]) -> Dict[str, Any]:
    """PCG64 state holds 128-bit integers; store them as decimal strings"""
    inner = state["state"]
    return {
        "bit_generator": state["bit_generator"],
        "state": {"state": str(inner["state"]), "inc": str(inner["inc"])},
        "has_uint32": int(state["has_uint32"]),
        "uinteger": int(state["uinteger"]),
    }


def decode_rng_state(data: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "bit_generator": data["bit_generator"],
        "state": {"state": int(data["state"]["state"]), "inc": int(data["state"]["inc"])},
        "has_uint32": int(data["has_uint32"]),
        "uinteger": int(data["uinteger"]),
    }


# ============== Checkpoints ==============

@dataclass
class Checkpoint:
    """Everything a trainer needs to continue a run"""
    network_config: NetworkConfig
    train_config: TrainConfig
    state: TrainState
    params: Dict[str, np.ndarray]
    frozen: Dict[str, Optional[List[float]]]
    network_seed: int
    search: bool
    path: Path

    def restore_network(self) -> Network:
        """Rebuild the network and load weights, gammas and frozen bits"""
        net = build_network(self.network_config, self.network_seed, delta=self.train_config.delta)
        net.load_state_dict(self.params)
        for name, gamma in zip(net.gamma_parameters(), net.gamma_sets()):
            bits = self.frozen.get(name)
            if bits is not None:
                gamma.frozen_bits = np.asarray(bits, dtype=np.float64)
                gamma.frozen = True
                gamma.g_hat.set_requires_grad(False)
        return net


def save_checkpoint(
    directory: Union[str, Path],
    net: Network,
    state: TrainState,
    cfg: TrainConfig,
    name: str = "latest",
    search: bool = True,
) -> Path:
    path = Path(directory) / name
    path.mkdir(parents=True, exist_ok=True)

    params_blob, params_index = pack_arrays(net.state_dict())
    opt = state.optimizer
    moments = {f"m/{key}": value for key, value in opt.m.items()}
    moments.update({f"v/{key}": value for key, value in opt.v.items()})
    moments_blob, moments_index = pack_arrays(moments)

    frozen = {
        key: gamma.frozen_bits.tolist() if gamma.frozen else None
        for key, gamma in zip(net.gamma_parameters(), net.gamma_sets())
    }
    manifest = {
        "format": "pit-checkpoint",
        "version": FORMAT_VERSION,
        "created_at": datetime.now().isoformat(),
        "search": search,
        "phase": state.phase.value,
        "step": state.step,
        "phase_step": state.phase_step,
        "epoch": state.epoch,
        "phase_epoch": state.phase_epoch,
        "best_val_loss": None if math.isinf(state.best_val_loss) else state.best_val_loss,
        "epochs_since_improvement": state.epochs_since_improvement,
        "history": state.history,
        "rng_state": encode_rng_state(state.rng_state) if state.rng_state else None,
        "optimizer": {"beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "t": opt.t},
        "network_seed": net.seed,
        "network_config": net.config.model_dump(mode="json"),
        "train_config": cfg.to_dict(),
        "frozen": frozen,
        "params": params_index,
        "moments": moments_index,
    }

    # Blobs first: a manifest only ever points at complete data
    _write_atomic(path / PARAMS_BLOB, params_blob)
    _write_atomic(path / MOMENTS_BLOB, moments_blob)
    _write_atomic(path / MANIFEST, orjson.dumps(manifest, option=orjson.OPT_INDENT_2))
    logger.debug(f"Saved checkpoint to {path} (phase={state.phase.value}, step={state.step})")
    return path


def resolve_checkpoint_path(path: Union[str, Path]) -> Path:
    """Accept either a checkpoint directory or a run directory holding `latest`"""
    path = Path(path)
    if (path / MANIFEST).exists():
        return path
    if (path / "latest" / MANIFEST).exists():
        return path / "latest"
    raise CheckpointError(f"No checkpoint manifest under {path}")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = resolve_checkpoint_path(path)
    try:
        manifest = orjson.loads((path / MANIFEST).read_bytes())
        params = unpack_arrays((path / PARAMS_BLOB).read_bytes(), manifest["params"])
        moments = unpack_arrays((path / MOMENTS_BLOB).read_bytes(), manifest["moments"])
    except (OSError, orjson.JSONDecodeError, KeyError) as e:
        raise CheckpointError(f"Cannot read checkpoint at {path}: {e}") from e
    if manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {manifest.get('version')}")

    opt_meta = manifest["optimizer"]
    optimizer = AdamState(
        beta1=opt_meta["beta1"],
        beta2=opt_meta["beta2"],
        eps=opt_meta["eps"],
        m={key[2:]: value for key, value in moments.items() if key.startswith("m/")},
        v={key[2:]: value for key, value in moments.items() if key.startswith("v/")},
        t={key: int(value) for key, value in opt_meta["t"].items()},
    )
    best = manifest["best_val_loss"]
    state = TrainState(
        phase=Phase(manifest["phase"]),
        step=manifest["step"],
        phase_step=manifest["phase_step"],
        epoch=manifest["epoch"],
        phase_epoch=manifest["phase_epoch"],
        best_val_loss=math.inf if best is None else best,
        epochs_since_improvement=manifest["epochs_since_improvement"],
        history={key: list(values) for key, values in manifest["history"].items()},
        rng_state=decode_rng_state(manifest["rng_state"]) if manifest["rng_state"] else None,
        optimizer=optimizer,
    )
    logger.info(f"Loaded checkpoint {path} (phase={state.phase.value}, epoch={state.epoch})")
    return Checkpoint(
        network_config=NetworkConfig.model_validate(manifest["network_config"]),
        train_config=TrainConfig.model_validate(manifest["train_config"]),
        state=state,
        params=params,
        frozen=manifest["frozen"],
        network_seed=manifest["network_seed"],
        search=manifest.get("search", True),
        path=path,
    )

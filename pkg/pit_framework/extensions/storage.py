"""
Exported model bundles and run summaries on disk
"""
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

import orjson

from ..core.config import NetworkConfig
from ..core.layers import ExportedModel, count_params
from .checkpoint import pack_arrays, unpack_arrays

logger = logging.getLogger(__name__)

BUNDLE_CONFIG = "config.json"
BUNDLE_WEIGHTS = "weights.bin"
BUNDLE_MANIFEST = "manifest.json"


class StorageError(OSError):
    """Bundle or summary could not be read or written"""


def save_bundle(model: ExportedModel, directory: Union[str, Path]) -> Path:
    """
    Layout: config.json (compact NetworkConfig), weights.bin (little-endian
    float64, concatenated) and manifest.json (per-tensor offsets, dilations).
    """
    directory = Path(directory)
    blob, index = pack_arrays(model.weights)
    manifest = {
        "format": "pit-bundle",
        "version": 1,
        "created_at": datetime.now().isoformat(),
        "dilations": list(model.dilations),
        "params": count_params(model),
        "tensors": index,
    }
    try:
        directory.mkdir(parents=True, exist_ok=True)
        model.config.save(directory / BUNDLE_CONFIG)
        (directory / BUNDLE_WEIGHTS).write_bytes(blob)
        (directory / BUNDLE_MANIFEST).write_bytes(orjson.dumps(manifest, option=orjson.OPT_INDENT_2))
    except OSError as e:
        raise StorageError(f"Cannot write bundle to {directory}: {e}") from e
    logger.info(f"Exported model with dilations {model.dilations} to {directory}")
    return directory


def load_bundle(directory: Union[str, Path]) -> ExportedModel:
    directory = Path(directory)
    try:
        config = NetworkConfig.load(directory / BUNDLE_CONFIG)
        manifest = orjson.loads((directory / BUNDLE_MANIFEST).read_bytes())
        weights = unpack_arrays((directory / BUNDLE_WEIGHTS).read_bytes(), manifest["tensors"])
    except (OSError, orjson.JSONDecodeError, KeyError) as e:
        raise StorageError(f"Cannot read bundle at {directory}: {e}") from e
    return ExportedModel(config=config, weights=weights, dilations=tuple(manifest["dilations"]))


def save_summary(summary: Dict[str, Any], path: Union[str, Path]) -> Path:
    """Write a run summary document (dilations, params, losses, history)"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(summary, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))
    except OSError as e:
        raise StorageError(f"Cannot write summary to {path}: {e}") from e
    return path


def run_summary(result, network: NetworkConfig, lambda_: float, seed: int, extra: Optional[Dict] = None) -> Dict[str, Any]:
    """Summary of a TrainedResult"""
    summary = {
        "network": network.name,
        "lambda": lambda_,
        "seed": seed,
        "dilations": list(result.dilations),
        "params": result.params,
        "seed_params": count_params(network),
        "final_val_loss": result.final_val_loss,
        "history": result.history,
        "steps": result.state.step,
        "epochs": result.state.epoch,
        "checkpoint": str(result.checkpoint_path) if result.checkpoint_path else None,
    }
    if extra:
        summary.update(extra)
    return summary

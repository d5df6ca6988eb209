"""
Datasets, split tags, mini-batching and the PITD binary file format
"""
import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Dict, Iterator, Sequence, Tuple, Union

import numpy as np
import orjson

from ..core.config import Task

logger = logging.getLogger(__name__)

MAGIC = b"PITD"
VERSION = 1
_TASK_CODES = {Task.REGRESSION: 0, Task.MULTILABEL: 1}


class DatasetError(ValueError):
    """Malformed dataset, dataset file or generator arguments"""


class Split(IntEnum):
    TRAIN = 0
    VAL = 1
    TEST = 2


@dataclass
class Dataset:
    """
    Sequences and targets with one split tag per sample.

    inputs: [N, C_in, T]; targets: [N, C_out, T] (regression) or
    [N, C_out] (multilabel).
    """
    inputs: np.ndarray
    targets: np.ndarray
    split: np.ndarray
    task: Task = Task.REGRESSION
    manifest: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.ascontiguousarray(self.inputs, dtype=np.float64)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float64)
        self.split = np.ascontiguousarray(self.split, dtype=np.uint8)
        self.task = Task(self.task)
        n = self.inputs.shape[0] if self.inputs.ndim else 0
        if self.inputs.ndim != 3 or n < 1:
            raise DatasetError(f"inputs must be [N >= 1, C_in, T], got shape {self.inputs.shape}")
        expected_ndim = 3 if self.task == Task.REGRESSION else 2
        if self.targets.ndim != expected_ndim or self.targets.shape[0] != n:
            raise DatasetError(
                f"{self.task.value} targets must have {expected_ndim} dims and N={n} rows, got {self.targets.shape}"
            )
        if self.task == Task.REGRESSION and self.targets.shape[2] != self.inputs.shape[2]:
            raise DatasetError(f"target length {self.targets.shape[2]} differs from input length {self.inputs.shape[2]}")
        if self.split.shape != (n,) or np.any(self.split > Split.TEST):
            raise DatasetError(f"split must hold one tag in 0..2 per sample, got shape {self.split.shape}")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def subset(self, split: Split) -> Tuple[np.ndarray, np.ndarray]:
        index = np.flatnonzero(self.split == split)
        return self.inputs[index], self.targets[index]

    def count(self, split: Split) -> int:
        return int(np.sum(self.split == split))


def assign_splits(n: int, fractions: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Random disjoint train/val/test tags with the given fractions (test takes the rest)"""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DatasetError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    tags = np.full(n, Split.TEST, dtype=np.uint8)
    order = rng.permutation(n)
    tags[order[:n_train]] = Split.TRAIN
    tags[order[n_train:n_train + n_val]] = Split.VAL
    return tags


def iter_batches(
    inputs: np.ndarray,
    targets: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """One shuffled pass; the last partial batch is kept"""
    order = rng.permutation(inputs.shape[0])
    for start in range(0, len(order), batch_size):
        index = order[start:start + batch_size]
        yield inputs[index], targets[index]


# ============== PITD file format ==============

def _pack_dims(shape: Tuple[int, ...]) -> bytes:
    return struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}Q", *shape)


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    """
    Layout: b"PITD", version u8, task u8, input dims (u8 count + u64 each),
    target dims (same), split tags (u8 x N), inputs and targets as
    little-endian float64, manifest length u64 + JSON bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = orjson.dumps(dataset.manifest, option=orjson.OPT_SERIALIZE_NUMPY)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BB", VERSION, _TASK_CODES[dataset.task]))
        f.write(_pack_dims(dataset.inputs.shape))
        f.write(_pack_dims(dataset.targets.shape))
        f.write(dataset.split.tobytes())
        f.write(dataset.inputs.astype("<f8").tobytes())
        f.write(dataset.targets.astype("<f8").tobytes())
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
    logger.info(f"Wrote dataset with {len(dataset)} sequences to {path}")
    return path


class _Reader:
    def __init__(self, raw: bytes, path: Path):
        self.raw, self.offset, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.raw):
            raise DatasetError(f"{self.path}: truncated dataset file")
        chunk = self.raw[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def dims(self) -> Tuple[int, ...]:
        (count,) = struct.unpack("<B", self.take(1))
        return struct.unpack(f"<{count}Q", self.take(8 * count))

    def floats(self, shape: Tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)


def read_dataset(path: Union[str, Path]) -> Dataset:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise DatasetError(f"{path}: not a PITD dataset (bad magic bytes)")
    version, task_code = struct.unpack("<BB", reader.take(2))
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported dataset version {version}")
    tasks = {code: task for task, code in _TASK_CODES.items()}
    if task_code not in tasks:
        raise DatasetError(f"{path}: unknown task code {task_code}")
    input_shape, target_shape = reader.dims(), reader.dims()
    split = np.frombuffer(reader.take(input_shape[0]), dtype=np.uint8).copy()
    inputs = reader.floats(input_shape)
    targets = reader.floats(target_shape)
    (manifest_len,) = struct.unpack("<Q", reader.take(8))
    manifest = orjson.loads(reader.take(manifest_len)) if manifest_len else {}
    return Dataset(inputs=inputs, targets=targets, split=split, task=tasks[task_code], manifest=manifest)

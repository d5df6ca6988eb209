"""
Synthetic tasks: a teacher-student regression with a known dilation and a
multi-scale periodic multilabel task
"""
import logging
import math
from typing import Iterable, Sequence

import numpy as np

from ..core.config import ConvSpec, NetworkConfig, PitConvSpec, Task
from ..core.layers import build_network
from ..core.masks import MaskError, MaskSpec, supported_dilations
from ..core.seeding import Component, derive_seed, generator
from ..core.tensor import Tensor
from .dataset import Dataset, DatasetError, assign_splits

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.7, 0.15, 0.15)


def _is_power_of_two(d: int) -> bool:
    return d >= 1 and d & (d - 1) == 0


def _check_sizes(n: int, steps: int) -> None:
    if n < 1:
        raise DatasetError(f"Need at least one sequence, got n={n}")
    if steps < 1:
        raise DatasetError(f"Sequence length must be >= 1, got T={steps}")


def teacher_config(rf_max: int = 9, dilation: int = 4, channels: int = 1) -> NetworkConfig:
    """Single dilated causal conv spanning rf_max with the given power-of-two dilation"""
    try:
        allowed = supported_dilations(MaskSpec(rf_max))
    except MaskError as e:
        raise DatasetError(str(e)) from e
    if dilation not in allowed:
        raise DatasetError(f"Teacher dilation {dilation} must be one of {allowed} for rf_max={rf_max}")
    conv = ConvSpec(
        c_in=channels,
        c_out=channels,
        kernel_size=(rf_max - 1) // dilation + 1,
        dilation=dilation,
    )
    return NetworkConfig(name=f"teacher-rf{rf_max}-d{dilation}", task=Task.REGRESSION, layers=[conv])


def generate_teacher_dataset(
    teacher_cfg: NetworkConfig,
    n: int,
    T: int,
    noise_sigma: float = 0.01,
    seed: int = 0,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> Dataset:
    """
    Standard-normal inputs through a seeded teacher network plus gaussian
    noise. The manifest holds the teacher config, seed and weights, so with
    noise_sigma=0 the targets can be rebuilt from it exactly.
    """
    _check_sizes(n, T)
    if noise_sigma < 0:
        raise DatasetError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if teacher_cfg.task != Task.REGRESSION:
        raise DatasetError("The teacher must be a regression network")
    for index, spec in enumerate(teacher_cfg.layers):
        if isinstance(spec, PitConvSpec):
            raise DatasetError(f"layer {index}: teacher layers need fixed dilations, got pit_conv")
        if isinstance(spec, ConvSpec) and not _is_power_of_two(spec.dilation):
            raise DatasetError(f"layer {index}: teacher dilation {spec.dilation} is not a power of two")

    teacher_seed = derive_seed(seed, Component.TEACHER_INIT)
    teacher = build_network(teacher_cfg, teacher_seed)
    c_in = teacher_cfg.input_channels
    inputs = generator(seed, Component.DATASET_INPUTS).standard_normal((n, c_in, T))
    targets = teacher(Tensor(inputs)).data.copy()
    if noise_sigma > 0:
        targets = targets + generator(seed, Component.DATASET_NOISE).normal(0.0, noise_sigma, size=targets.shape)
    split = assign_splits(n, fractions, generator(seed, Component.DATASET_SPLIT))

    manifest = {
        "generator": "teacher",
        "seed": seed,
        "n": n,
        "T": T,
        "noise_sigma": noise_sigma,
        "fractions": list(fractions),
        "teacher_seed": teacher_seed,
        "teacher_config": teacher_cfg.model_dump(mode="json"),
        "teacher_weights": {name: tensor.data.tolist() for name, tensor in teacher.parameters().items()},
        "dilations": [spec.dilation for spec in teacher_cfg.layers if isinstance(spec, ConvSpec)],
    }
    logger.info(f"Generated teacher dataset: n={n} T={T} sigma={noise_sigma} dilations={manifest['dilations']}")
    return Dataset(inputs=inputs, targets=targets, split=split, task=Task.REGRESSION, manifest=manifest)


def _check_periods(periods: Iterable[int], steps: int) -> list:
    periods = list(periods)
    if not periods:
        raise DatasetError("Need at least one period")
    if len(set(periods)) != len(periods):
        raise DatasetError(f"Periods must be unique, got {periods}")
    for p in periods:
        if not isinstance(p, (int, np.integer)) or p < 2 or p > steps / 2:
            raise DatasetError(f"Period {p!r} must be an integer in [2, T/2] with T={steps}")
    return [int(p) for p in periods]


def generate_multiscale_dataset(
    periods: Sequence[int],
    n: int,
    T: int,
    seed: int = 0,
    noise_sigma: float = 0.1,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
) -> Dataset:
    """
    Each sequence sums unit sinusoids (random phase) for the periods marked
    present in its label row, plus gaussian noise. Every label is present in
    exactly ceil(n / 2) sequences.
    """
    _check_sizes(n, T)
    periods = _check_periods(periods, T)
    if noise_sigma < 0:
        raise DatasetError(f"noise_sigma must be >= 0, got {noise_sigma}")

    label_rng = generator(seed, Component.DATASET_LABELS)
    labels = np.zeros((n, len(periods)))
    positives = math.ceil(n / 2)
    for j in range(len(periods)):
        labels[label_rng.permutation(n)[:positives], j] = 1.0

    phases = generator(seed, Component.DATASET_INPUTS).uniform(0.0, 2.0 * np.pi, size=(n, len(periods)))
    t = np.arange(T)
    inputs = np.zeros((n, 1, T))
    for j, p in enumerate(periods):
        waves = np.sin(2.0 * np.pi * t[None, :] / p + phases[:, j, None])
        inputs[:, 0, :] += labels[:, j, None] * waves
    if noise_sigma > 0:
        inputs += generator(seed, Component.DATASET_NOISE).normal(0.0, noise_sigma, size=inputs.shape)
    split = assign_splits(n, fractions, generator(seed, Component.DATASET_SPLIT))

    manifest = {
        "generator": "multiscale",
        "seed": seed,
        "n": n,
        "T": T,
        "periods": periods,
        "noise_sigma": noise_sigma,
        "fractions": list(fractions),
    }
    logger.info(f"Generated multiscale dataset: n={n} T={T} periods={periods}")
    return Dataset(inputs=inputs, targets=labels, split=split, task=Task.MULTILABEL, manifest=manifest)

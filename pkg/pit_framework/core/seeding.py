"""
Seed derivation for every random stream in the framework.

All randomness comes from numpy's PCG64 generator seeded through a
SeedSequence whose entropy is ``(global_seed, component, *indices)``.
The hierarchy is written down in docs/FORMATS.md so streams can be
reproduced outside Python.
"""
from enum import IntEnum

import numpy as np


class Component(IntEnum):
    """Stream identifiers under a global seed"""
    NETWORK_INIT = 1   # indices: (layer_index,)
    DATA_ORDER = 2     # indices: ()
    DATASET_INPUTS = 3
    DATASET_NOISE = 4
    DATASET_LABELS = 5
    DATASET_SPLIT = 6
    TEACHER_INIT = 7
    SWEEP_POINT = 8    # indices: (lambda_index, warmup_index, repetition)
    GRADCHECK = 9


def generator(seed: int, component: Component, *indices: int) -> np.random.Generator:
    """PCG64 generator for one stream"""
    entropy = [int(seed), int(component), *[int(i) for i in indices]]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, component: Component, *indices: int) -> int:
    """A 32-bit child seed, stable across platforms"""
    entropy = [int(seed), int(component), *[int(i) for i in indices]]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])

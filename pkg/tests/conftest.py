"""
Shared fixtures for the test suite
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path to import framework
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pit_framework.core.config import NetworkConfig, PitConvSpec  # noqa: E402
from pit_framework.data.synthetic import generate_teacher_dataset, teacher_config  # noqa: E402

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> NetworkConfig:
    return NetworkConfig(name="tiny", layers=[PitConvSpec(c_in=1, c_out=1, rf_max=9)])


@pytest.fixture
def teacher_data():
    """Small teacher-student regression task (d=4, rf_max=9)"""
    return generate_teacher_dataset(teacher_config(9, 4, 1), n=40, T=24, noise_sigma=0.01, seed=3)

"""
Datasets, the PITD file format and synthetic task generators
"""

from .dataset import Dataset, DatasetError, Split, read_dataset, write_dataset
from .synthetic import generate_teacher_dataset, generate_multiscale_dataset, teacher_config

__all__ = [
    "Dataset",
    "DatasetError",
    "Split",
    "read_dataset",
    "write_dataset",
    "generate_teacher_dataset",
    "generate_multiscale_dataset",
    "teacher_config",
]

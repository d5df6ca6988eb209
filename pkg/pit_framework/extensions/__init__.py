"""
Persistence helpers. The explorer lives in pit_framework.extensions.explorer.
"""

from .checkpoint import Checkpoint, CheckpointError, save_checkpoint, load_checkpoint
from .storage import StorageError, save_bundle, load_bundle, save_summary

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "StorageError",
    "save_bundle",
    "load_bundle",
    "save_summary",
]

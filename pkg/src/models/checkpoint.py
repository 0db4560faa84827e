import logging
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import torch

from src.utils.errors import ConfigHashMismatchError, InvalidDataError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    """Model parameters plus the provenance needed to trust them."""

    phase: str
    state_dict: dict[str, torch.Tensor]
    config_hash: str
    completed: bool = True
    history: dict[str, Any] = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION


def save_checkpoint(checkpoint: Checkpoint, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    torch.save(
        {
            "version": checkpoint.version,
            "phase": checkpoint.phase,
            "config_hash": checkpoint.config_hash,
            "completed": checkpoint.completed,
            "history": checkpoint.history,
            "state_dict": checkpoint.state_dict,
        },
        path,
    )
    logger.info(f"Saved {checkpoint.phase} checkpoint to {path}")
    return path


def load_checkpoint(path: str, expected_config_hash: Optional[str] = None) -> Checkpoint:
    """
    Load a checkpoint, rejecting unknown versions and config hash mismatches.

    Args:
        path (str): Checkpoint file.
        expected_config_hash (Optional[str]): If given, the embedded hash must equal it.

    Returns:
        Checkpoint: The loaded checkpoint.
    """
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise InvalidDataError(
            f"Unsupported checkpoint version {blob.get('version')} in {path}"
        )
    if expected_config_hash is not None and blob["config_hash"] != expected_config_hash:
        raise ConfigHashMismatchError(
            f"Checkpoint {path} was produced with config {blob['config_hash'][:12]}, "
            f"expected {expected_config_hash[:12]}"
        )
    return Checkpoint(
        phase=blob["phase"],
        state_dict=blob["state_dict"],
        config_hash=blob["config_hash"],
        completed=blob["completed"],
        history=blob["history"],
        version=blob["version"],
    )

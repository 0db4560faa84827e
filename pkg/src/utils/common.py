import hashlib
import json
import os
import random
import re
from dataclasses import asdict, is_dataclass
from typing import Any

import numpy as np
import torch


def extract_split_from_filename(file_name: str) -> dict:
    """
    Extract metadata from a split manifest filename formatted as
    '[dataset_name]_split[index].json' using regular expressions.

    Args:
        file_name (str): The filename to extract metadata from.

    Returns:
        dict: A dictionary with "dataset_name" and "split_index" (None when the
        filename does not match the expected pattern).
    """
    pattern = r"^(.+)_split(\d+)\.json$"

    match = re.match(pattern, os.path.basename(file_name))

    if match:
        return {"dataset_name": match.group(1), "split_index": int(match.group(2))}
    else:
        return {"dataset_name": None, "split_index": None}


def split_filename(dataset_name: str, split_index: int) -> str:
    """Inverse of `extract_split_from_filename`."""
    return f"{dataset_name}_split{split_index}.json"


def to_jsonable(obj: Any) -> Any:
    """Convert dataclasses, numpy scalars/arrays and tuples into plain JSON types."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj: Any) -> str:
    """SHA-256 of the canonical JSON form of a config (dataclass or dict)."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def parameter_hash(module: torch.nn.Module) -> str:
    """SHA-256 over every tensor of a module's state dict, in key order."""
    digest = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def write_json(obj: Any, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(obj), f, ensure_ascii=False, indent=2, sort_keys=True)


def read_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def seed_everything(seed: int) -> None:
    """Seed the global generators used by torch layer initialisation."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)

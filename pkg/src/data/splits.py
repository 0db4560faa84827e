"""Fine-grained OOD environments built by holding out classes of a dataset."""

import logging
import os
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from src.data.examples import DatasetBundle, ExampleSet
from src.utils.common import read_json, split_filename, write_json
from src.utils.errors import (
    InvalidArgumentError,
    InvalidDataError,
    UnsupportedOperationError,
)

logger = logging.getLogger(__name__)

MANIFEST_KEYS = (
    "dataset_name",
    "split_index",
    "seed",
    "id_classes",
    "fine_ood_classes",
    "coarse_ood_sources",
)


@dataclass(frozen=True)
class EnvironmentSpec:
    dataset_name: str
    split_index: int
    id_classes: tuple[str, ...]
    fine_ood_classes: tuple[str, ...]
    coarse_ood_sources: tuple[str, ...]
    seed: int

    def __post_init__(self):
        validate_environment(self)

    @property
    def num_id_classes(self) -> int:
        return len(self.id_classes)

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "split_index": self.split_index,
            "seed": self.seed,
            "id_classes": list(self.id_classes),
            "fine_ood_classes": list(self.fine_ood_classes),
            "coarse_ood_sources": list(self.coarse_ood_sources),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "EnvironmentSpec":
        missing = [k for k in MANIFEST_KEYS if k not in data]
        extra = [k for k in data if k not in MANIFEST_KEYS]
        if missing or extra:
            raise InvalidDataError(
                f"Split manifest keys mismatch (missing={missing}, unexpected={extra})"
            )
        for key in ("id_classes", "fine_ood_classes", "coarse_ood_sources"):
            if not isinstance(data[key], list) or not all(
                isinstance(c, str) for c in data[key]
            ):
                raise InvalidDataError(f"Split manifest field '{key}' must be a list of strings")
        if not isinstance(data["dataset_name"], str):
            raise InvalidDataError("Split manifest field 'dataset_name' must be a string")
        for key in ("split_index", "seed"):
            if not isinstance(data[key], int) or isinstance(data[key], bool):
                raise InvalidDataError(f"Split manifest field '{key}' must be an integer")
        try:
            return cls(
                dataset_name=data["dataset_name"],
                split_index=data["split_index"],
                id_classes=tuple(data["id_classes"]),
                fine_ood_classes=tuple(data["fine_ood_classes"]),
                coarse_ood_sources=tuple(data["coarse_ood_sources"]),
                seed=data["seed"],
            )
        except InvalidArgumentError as e:
            raise InvalidDataError(f"Invalid split manifest: {e}") from e


def validate_environment(
    spec: EnvironmentSpec, class_set: Optional[Sequence[str]] = None
) -> None:
    """Check the EnvironmentSpec invariants, raising InvalidArgumentError."""
    if spec.split_index < 1:
        raise InvalidArgumentError(f"split_index must be 1-based, got {spec.split_index}")
    if not 0 <= spec.seed < 2**64:
        raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {spec.seed}")
    overlap = set(spec.id_classes) & set(spec.fine_ood_classes)
    if overlap:
        raise InvalidArgumentError(
            f"Classes both ID and fine-OOD: {sorted(overlap)[:5]}"
        )
    if len(set(spec.id_classes)) != len(spec.id_classes) or len(
        set(spec.fine_ood_classes)
    ) != len(spec.fine_ood_classes):
        raise InvalidArgumentError("Duplicate class identifiers in environment")
    if spec.dataset_name in spec.coarse_ood_sources:
        raise InvalidArgumentError(
            f"Dataset '{spec.dataset_name}' cannot be its own coarse-OOD source"
        )
    if class_set is not None:
        union = set(spec.id_classes) | set(spec.fine_ood_classes)
        if union != set(class_set):
            raise InvalidArgumentError(
                f"Environment classes do not cover the class set of '{spec.dataset_name}'"
            )


@dataclass
class DataPartition:
    """ID data of one environment. Labels index into ``class_names``."""

    train: ExampleSet
    validation: ExampleSet
    test: ExampleSet
    class_names: list[str] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass
class OutlierPool:
    examples: ExampleSet
    source_labels: Optional[list[str]] = None
    excluded_concepts: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)


@dataclass
class EnvironmentData:
    """Evaluation collections of one environment; coarse OOD may be absent."""

    id_test: ExampleSet
    fine_ood: Optional[ExampleSet] = None
    coarse_ood: Optional[ExampleSet] = None


def _split_rng(seed: int, split_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, split_index])


def make_holdout_splits(
    class_set: Sequence[str],
    n_ood: int,
    n_splits: int,
    seed: int,
    dataset_name: str = "dataset",
    coarse_ood_sources: Sequence[str] = (),
) -> list[EnvironmentSpec]:
    """
    Draw `n_splits` independent ID/fine-OOD class partitions.

    Split k holds out a uniformly random `n_ood`-subset drawn from a generator
    seeded by (seed, k). ID classes keep the order of `class_set`; held-out
    classes are listed in class-set order too.

    Args:
        class_set (Sequence[str]): Every class identifier of the dataset.
        n_ood (int): Number of classes to hold out per split.
        n_splits (int): Number of splits, indexed from 1.
        seed (int): Base seed recorded in each EnvironmentSpec.
        dataset_name (str): Name of the ID dataset.
        coarse_ood_sources (Sequence[str]): Other datasets used as coarse OOD.

    Returns:
        list[EnvironmentSpec]: One spec per split.
    """
    classes = list(class_set)
    if not classes:
        raise InvalidArgumentError("class_set is empty")
    if len(set(classes)) != len(classes):
        raise InvalidArgumentError("class_set contains duplicates")
    if n_ood < 0 or n_ood >= len(classes):
        raise InvalidArgumentError(
            f"n_ood must satisfy 0 <= n_ood < {len(classes)}, got {n_ood}"
        )
    if n_splits < 1:
        raise InvalidArgumentError(f"n_splits must be >= 1, got {n_splits}")

    specs = []
    for split_index in range(1, n_splits + 1):
        rng = _split_rng(seed, split_index)
        held_out = set(rng.choice(len(classes), size=n_ood, replace=False).tolist())
        specs.append(
            EnvironmentSpec(
                dataset_name=dataset_name,
                split_index=split_index,
                id_classes=tuple(c for i, c in enumerate(classes) if i not in held_out),
                fine_ood_classes=tuple(c for i, c in enumerate(classes) if i in held_out),
                coarse_ood_sources=tuple(coarse_ood_sources),
                seed=seed,
            )
        )
        logger.info(
            f"Split {split_index} of '{dataset_name}': "
            f"{len(classes) - n_ood} ID / {n_ood} fine-OOD classes"
        )
    return specs


def _class_positions(dataset: DatasetBundle, classes: Sequence[str]) -> list[int]:
    lookup = {c: i for i, c in enumerate(dataset.classes)}
    missing = [c for c in classes if c not in lookup]
    if missing:
        raise InvalidDataError(
            f"Classes not present in dataset '{dataset.name}': {missing[:5]}"
        )
    return [lookup[c] for c in classes]


def partition_id_data(
    dataset: DatasetBundle, spec: EnvironmentSpec, val_fraction: float, seed: int
) -> DataPartition:
    """
    Build ID train/validation/test collections for an environment.

    Fine-OOD classes are dropped from every portion. Each ID class's training
    examples are split with floor(n * val_fraction) validation examples, but at
    least one when the class has two or more. Labels are remapped to positions
    in `spec.id_classes`.
    """
    if not 0.0 < val_fraction < 1.0:
        raise InvalidArgumentError(f"val_fraction must be in (0, 1), got {val_fraction}")

    positions = _class_positions(dataset, spec.id_classes)
    remap = torch.full((dataset.num_classes,), -1, dtype=torch.long)
    for new_label, old_label in enumerate(positions):
        remap[old_label] = new_label

    train_labels = dataset.train.labels
    rng = np.random.default_rng([seed, spec.split_index])
    train_index, val_index = [], []
    for class_name, old_label in zip(spec.id_classes, positions):
        members = torch.nonzero(train_labels == old_label).flatten().numpy()
        if len(members) == 0:
            raise InvalidDataError(
                f"ID class '{class_name}' has no training examples in '{dataset.name}'"
            )
        members = rng.permutation(members)
        n_val = int(np.floor(len(members) * val_fraction))
        if n_val == 0 and len(members) >= 2:
            n_val = 1
        val_index.extend(sorted(members[:n_val].tolist()))
        train_index.extend(sorted(members[n_val:].tolist()))

    test_mask = remap[dataset.test.labels] >= 0
    test_index = torch.nonzero(test_mask).flatten()

    def _remapped(collection: ExampleSet, index, name: str) -> ExampleSet:
        subset = collection.subset(index, name=name)
        return subset.relabel(remap[subset.labels])

    partition = DataPartition(
        train=_remapped(dataset.train, sorted(train_index), "id_train"),
        validation=_remapped(dataset.train, sorted(val_index), "id_validation"),
        test=_remapped(dataset.test, test_index, "id_test"),
        class_names=list(spec.id_classes),
    )
    logger.info(
        f"Partitioned '{dataset.name}' split {spec.split_index}: "
        f"{len(partition.train)} train / {len(partition.validation)} validation / "
        f"{len(partition.test)} test"
    )
    return partition


def assemble_fine_ood(spec: EnvironmentSpec, dataset: DatasetBundle) -> ExampleSet:
    """Test-portion examples of the held-out classes, tagged `fine_ood`."""
    positions = _class_positions(dataset, spec.fine_ood_classes)
    if not positions:
        return ExampleSet.empty(dataset.test.input_shape, name="fine_ood")
    mask = torch.isin(dataset.test.labels, torch.tensor(positions, dtype=torch.long))
    subset = dataset.test.subset(torch.nonzero(mask).flatten(), name="fine_ood")
    return subset.relabel(None).retag("fine_ood")


def assemble_coarse_ood(
    spec: EnvironmentSpec, datasets: Mapping[str, DatasetBundle]
) -> ExampleSet:
    """Concatenate the test portions of all coarse-OOD sources, tagged by source name."""
    missing = [name for name in spec.coarse_ood_sources if name not in datasets]
    if missing:
        raise InvalidArgumentError(f"Coarse-OOD source datasets not provided: {missing}")
    parts = [
        datasets[name].test.relabel(None).retag(name)
        for name in spec.coarse_ood_sources
    ]
    if not parts:
        return ExampleSet([], torch.empty(0), name="coarse_ood")
    return ExampleSet.concat(parts, name="coarse_ood")


def filter_outlier_pool(pool: OutlierPool, forbidden: Sequence[str]) -> OutlierPool:
    """Drop every outlier whose source label is forbidden, preserving order."""
    forbidden = list(forbidden)
    if pool.source_labels is None:
        if forbidden:
            raise UnsupportedOperationError(
                "Cannot filter an outlier pool without source labels"
            )
        return OutlierPool(pool.examples, None, [])

    blocked = set(forbidden)
    keep = [i for i, label in enumerate(pool.source_labels) if label not in blocked]
    filtered = OutlierPool(
        examples=pool.examples.subset(keep, name=pool.examples.name),
        source_labels=[pool.source_labels[i] for i in keep],
        excluded_concepts=forbidden,
    )
    removed = len(pool) - len(filtered)
    logger.info(f"Filtered outlier pool: removed {removed}, kept {len(filtered)}")
    if len(filtered) == 0:
        logger.warning("Outlier pool is empty after filtering; every concept was forbidden")
    return filtered


def split_outlier_validation(
    pool: OutlierPool, fraction: float, seed: int
) -> tuple[OutlierPool, OutlierPool]:
    """Hold out round(len * fraction) outliers for validation; both parts keep pool order."""
    if not 0.0 < fraction < 1.0:
        raise InvalidArgumentError(f"fraction must be in (0, 1), got {fraction}")
    n_val = int(round(len(pool) * fraction))
    order = np.random.default_rng(seed).permutation(len(pool))
    val_index = sorted(order[:n_val].tolist())
    train_index = sorted(order[n_val:].tolist())

    def _take(index: list[int], name: str) -> OutlierPool:
        labels = (
            [pool.source_labels[i] for i in index]
            if pool.source_labels is not None
            else None
        )
        return OutlierPool(
            pool.examples.subset(index, name=name), labels, list(pool.excluded_concepts)
        )

    return _take(train_index, "outlier_train"), _take(val_index, "outlier_validation")


def save_environment(spec: EnvironmentSpec, out_dir: str, force: bool = False) -> str:
    """Write one JSON manifest per environment; refuses to overwrite unless forced."""
    path = os.path.join(out_dir, split_filename(spec.dataset_name, spec.split_index))
    if os.path.exists(path) and not force:
        raise InvalidArgumentError(f"Split manifest already exists: {path} (use --force)")
    write_json(spec.to_dict(), path)
    return path


def load_environment(path: str, class_set: Optional[Sequence[str]] = None) -> EnvironmentSpec:
    spec = EnvironmentSpec.from_dict(read_json(path))
    if class_set is not None:
        try:
            validate_environment(spec, class_set)
        except InvalidArgumentError as e:
            raise InvalidDataError(f"{path}: {e}") from e
    return spec

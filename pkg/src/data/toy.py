"""
Desk-scale synthetic image datasets.

A "family" plays the role of one fine-grained dataset: all of its classes
share a smooth base pattern and differ only by small class-specific
perturbations, so held-out classes are semantically close to the ID classes.
Different families have unrelated base patterns and act as coarse-grained OOD
for each other. The auxiliary outlier corpus is drawn from further families
("concepts"), labeled by concept so relevant ones can be filtered out.
"""

import zlib
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from src.data.examples import DatasetBundle, ExampleSet
from src.data.splits import OutlierPool
from src.utils.errors import InvalidArgumentError


def _family_generator(name: str, seed: int) -> torch.Generator:
    entropy = np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))])
    return torch.Generator().manual_seed(int(entropy.generate_state(1)[0]))


def _smooth_pattern(
    gen: torch.Generator, channels: int, image_size: int, grid: int
) -> torch.Tensor:
    coarse = torch.randn(1, channels, grid, grid, generator=gen)
    return F.interpolate(
        coarse, size=(image_size, image_size), mode="bilinear", align_corners=True
    )[0]


def toy_class_names(name: str, n_classes: int) -> list[str]:
    return [f"{name}/{i:03d}" for i in range(n_classes)]


def make_toy_family(
    name: str,
    n_classes: int,
    n_train_per_class: int = 60,
    n_test_per_class: int = 20,
    image_size: int = 16,
    channels: int = 1,
    class_spread: float = 0.6,
    noise: float = 0.5,
    seed: int = 0,
) -> DatasetBundle:
    """
    Generate one fine-grained family as a labeled dataset.

    The same (name, seed) always produces the same base pattern and prototypes,
    so a concept named like an ID family reproduces that family's images.

    Args:
        name (str): Family (dataset) name; class ids are "<name>/<index>".
        n_classes (int): Number of classes.
        n_train_per_class (int): Training examples per class.
        n_test_per_class (int): Test examples per class.
        image_size (int): Height and width of each image.
        channels (int): Number of channels.
        class_spread (float): Scale of class-specific perturbations.
        noise (float): Per-example pixel noise scale.
        seed (int): Base seed.

    Returns:
        DatasetBundle: Train and test portions with integer labels.
    """
    if n_classes < 1:
        raise InvalidArgumentError(f"n_classes must be positive, got {n_classes}")
    gen = _family_generator(name, seed)
    base = _smooth_pattern(gen, channels, image_size, grid=4)
    prototypes = torch.stack(
        [
            base + class_spread * _smooth_pattern(gen, channels, image_size, grid=6)
            for _ in range(n_classes)
        ]
    )

    def _draw(per_class: int, portion: str) -> ExampleSet:
        labels = torch.arange(n_classes).repeat_interleave(per_class)
        inputs = prototypes[labels] + noise * torch.randn(
            (len(labels), channels, image_size, image_size), generator=gen
        )
        ids = [f"{name}/{portion}/{i}" for i in range(len(labels))]
        return ExampleSet(ids, inputs, labels, name=f"{name}_{portion}")

    return DatasetBundle(
        name=name,
        classes=toy_class_names(name, n_classes),
        train=_draw(n_train_per_class, "train"),
        test=_draw(n_test_per_class, "test"),
    )


def make_outlier_corpus(
    concepts: Sequence[str],
    n_per_concept: int,
    n_classes_per_concept: int = 4,
    image_size: int = 16,
    channels: int = 1,
    class_spread: float = 0.6,
    noise: float = 0.5,
    seed: int = 0,
) -> OutlierPool:
    """
    Build an unlabeled outlier pool whose examples carry their concept name.

    Concept images come from `make_toy_family`, so a concept that shares its
    name with an evaluation family contains that family's content and must be
    removed with `filter_outlier_pool` before training.
    """
    per_class = max(1, int(np.ceil(n_per_concept / n_classes_per_concept)))
    parts, labels = [], []
    for concept in concepts:
        family = make_toy_family(
            concept,
            n_classes_per_concept,
            n_train_per_class=per_class,
            n_test_per_class=0,
            image_size=image_size,
            channels=channels,
            class_spread=class_spread,
            noise=noise,
            seed=seed,
        )
        take = family.train.subset(list(range(min(n_per_concept, len(family.train)))))
        parts.append(
            ExampleSet(
                [f"outlier/{i}" for i in take.ids],
                take.inputs,
                tags=[concept] * len(take),
                name="outliers",
            )
        )
        labels.extend([concept] * len(take))
    examples = ExampleSet.concat(parts, name="outliers")
    return OutlierPool(examples=examples, source_labels=labels, excluded_concepts=[])

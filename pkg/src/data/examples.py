from dataclasses import dataclass
from typing import Optional, Sequence

import torch

from src.utils.errors import InvalidArgumentError


class ExampleSet:
    """
    An ordered collection of examples with stable string identities.

    Reads of the input tensor are counted so that training code can be audited:
    a collection that must never reach the optimizer (test data, fine-grained
    OOD, outlier validation) keeps ``reads == 0`` across a training phase.
    Structural operations (subset, relabel, retag, concat) are not reads.
    """

    def __init__(
        self,
        ids: Sequence[str],
        inputs: torch.Tensor,
        labels: Optional[torch.Tensor] = None,
        tags: Optional[Sequence[str]] = None,
        name: str = "",
    ):
        """
        Args:
            ids: One unique identity per example.
            inputs: Tensor whose first axis indexes examples.
            labels: Optional integer class indices, one per example.
            tags: Optional per-example provenance tag (e.g. source dataset).
            name: Human readable collection name used in logs.
        """
        if len(ids) != inputs.shape[0]:
            raise InvalidArgumentError(
                f"ExampleSet '{name}': {len(ids)} ids for {inputs.shape[0]} inputs"
            )
        if labels is not None and labels.shape[0] != inputs.shape[0]:
            raise InvalidArgumentError(
                f"ExampleSet '{name}': {labels.shape[0]} labels for {inputs.shape[0]} inputs"
            )
        if tags is not None and len(tags) != inputs.shape[0]:
            raise InvalidArgumentError(
                f"ExampleSet '{name}': {len(tags)} tags for {inputs.shape[0]} inputs"
            )
        self.ids = list(ids)
        self._inputs = inputs
        self.labels = labels.long() if labels is not None else None
        self.tags = list(tags) if tags is not None else [name] * len(self.ids)
        self.name = name
        self.reads = 0

    def __len__(self) -> int:
        return len(self.ids)

    def __repr__(self) -> str:
        return f"ExampleSet(name={self.name!r}, n={len(self)})"

    @property
    def inputs(self) -> torch.Tensor:
        self.reads += 1
        return self._inputs

    @property
    def input_shape(self) -> tuple:
        """Per-example input shape; does not count as a read."""
        return tuple(self._inputs.shape[1:])

    def reset_reads(self) -> None:
        self.reads = 0

    def batch(self, indices) -> tuple[torch.Tensor, Optional[torch.Tensor]]:
        """Return (inputs, labels) for the given positions."""
        index = torch.as_tensor(indices, dtype=torch.long)
        inputs = self.inputs[index]
        labels = self.labels[index] if self.labels is not None else None
        return inputs, labels

    def subset(self, indices, name: Optional[str] = None) -> "ExampleSet":
        index = torch.as_tensor(indices, dtype=torch.long).reshape(-1)
        positions = index.tolist()
        return ExampleSet(
            ids=[self.ids[i] for i in positions],
            inputs=self._inputs[index],
            labels=self.labels[index] if self.labels is not None else None,
            tags=[self.tags[i] for i in positions],
            name=name if name is not None else self.name,
        )

    def relabel(self, labels: Optional[torch.Tensor], name: Optional[str] = None) -> "ExampleSet":
        return ExampleSet(
            ids=self.ids,
            inputs=self._inputs,
            labels=labels,
            tags=self.tags,
            name=name if name is not None else self.name,
        )

    def retag(self, tag: str, name: Optional[str] = None) -> "ExampleSet":
        return ExampleSet(
            ids=self.ids,
            inputs=self._inputs,
            labels=self.labels,
            tags=[tag] * len(self),
            name=name if name is not None else self.name,
        )

    @staticmethod
    def concat(sets: Sequence["ExampleSet"], name: str = "") -> "ExampleSet":
        """Concatenate collections in order; labels are kept only if all sets have them."""
        if not sets:
            return ExampleSet([], torch.empty(0), name=name)
        if all(len(s) == 0 for s in sets):
            return ExampleSet.empty(sets[0].input_shape, name=name)
        sets = [s for s in sets if len(s) > 0]
        keep_labels = all(s.labels is not None for s in sets)
        return ExampleSet(
            ids=[i for s in sets for i in s.ids],
            inputs=torch.cat([s._inputs for s in sets], dim=0),
            labels=torch.cat([s.labels for s in sets]) if keep_labels else None,
            tags=[t for s in sets for t in s.tags],
            name=name,
        )

    @staticmethod
    def empty(input_shape: tuple, name: str = "") -> "ExampleSet":
        return ExampleSet([], torch.empty((0, *input_shape)), name=name)


@dataclass
class DatasetBundle:
    """A labeled dataset with its canonical train and test portions.

    Labels in both portions index into ``classes``.
    """

    name: str
    classes: list[str]
    train: ExampleSet
    test: ExampleSet

    @property
    def num_classes(self) -> int:
        return len(self.classes)

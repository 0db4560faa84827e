import math
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Optional

from src.objectives.config import ObjectiveConfig
from src.utils.common import config_hash
from src.utils.errors import InvalidArgumentError

PHASES = ("standard", "finetune")
DEFAULT_EPOCHS = {"standard": 90, "finetune": 10}
PAIRED_OUTLIER_KINDS = frozenset({"mixoe", "mix_plus_oe"})
DOUBLED_OUTLIER_KINDS = frozenset({"oe", "oe_hard_mining", "energy_oe"})


@dataclass
class OptimizerConfig:
    """SGD with momentum. Momentum and weight decay are not fixed by the method; these are the defaults."""

    type: str = "sgd"
    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.type != "sgd":
            raise InvalidArgumentError(f"Only 'sgd' is supported, got '{self.type}'")
        if not self.lr > 0:
            raise InvalidArgumentError(f"lr must be positive, got {self.lr}")


@dataclass
class TrainConfig:
    """
    One training phase.

    `epochs` defaults to 90 for the standard phase and 10 for fine-tuning.
    `outlier_batch_size` is derived from the objective when omitted: equal to
    the ID batch size for paired mixing objectives, twice the ID batch size for
    the OE family, zero for ID-only objectives.
    """

    phase: str = "standard"
    epochs: Optional[int] = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: str = "cosine"
    id_batch_size: int = 32
    outlier_batch_size: Optional[int] = None
    objective: ObjectiveConfig = field(default_factory=lambda: ObjectiveConfig.for_kind("standard"))
    seed: int = 0
    pretrained_init: bool = False

    def __post_init__(self):
        if self.phase not in PHASES:
            raise InvalidArgumentError(f"phase must be one of {PHASES}, got '{self.phase}'")
        if self.schedule != "cosine":
            raise InvalidArgumentError(f"Only the cosine schedule is supported, got '{self.schedule}'")
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS[self.phase]
        if self.epochs < 1:
            raise InvalidArgumentError(f"epochs must be positive, got {self.epochs}")
        if self.id_batch_size < 1:
            raise InvalidArgumentError("id_batch_size must be positive")
        if self.phase == "standard" and self.objective.kind != "standard":
            raise InvalidArgumentError(
                f"The standard phase trains with cross-entropy only, got '{self.objective.kind}'"
            )
        expected = self.expected_outlier_batch_size()
        if self.outlier_batch_size is None:
            self.outlier_batch_size = expected
        elif self.outlier_batch_size != expected:
            raise InvalidArgumentError(
                f"outlier_batch_size for '{self.objective.kind}' must be {expected}, "
                f"got {self.outlier_batch_size}"
            )

    def expected_outlier_batch_size(self) -> int:
        kind = self.objective.kind
        if kind in PAIRED_OUTLIER_KINDS:
            return self.id_batch_size
        if kind in DOUBLED_OUTLIER_KINDS:
            return 2 * self.id_batch_size
        return 0

    def steps_per_epoch(self, n_train: int) -> int:
        return max(1, n_train // self.id_batch_size) if n_train else 0

    def effective_id_batch_size(self, n_train: int) -> int:
        """The ID batch is clipped to the training split when the split is smaller."""
        return min(self.id_batch_size, n_train)

    def effective_outlier_batch_size(self, n_train: int) -> int:
        """Outliers per step at the kind's fixed ratio to the effective ID batch."""
        return self.outlier_batch_size * self.effective_id_batch_size(n_train) // self.id_batch_size

    def to_dict(self) -> dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["optimizer"] = dict(vars(self.optimizer))
        data["objective"] = self.objective.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = [k for k in data if k not in known]
        if unknown:
            raise InvalidArgumentError(f"Unknown train config keys: {unknown}")
        values = dict(data)
        if "optimizer" in values:
            values["optimizer"] = OptimizerConfig(**values["optimizer"])
        if "objective" in values:
            values["objective"] = ObjectiveConfig.from_dict(values["objective"])
        return cls(**values)

    def hash(self) -> str:
        return config_hash(self.to_dict())


def cosine_factor(step: int, total_steps: int) -> float:
    """Multiplier of the initial learning rate: 0.5 * (1 + cos(pi * t / T))."""
    if total_steps <= 0:
        return 1.0
    return 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def cosine_lr(lr0: float, step: int, total_steps: int) -> float:
    return lr0 * cosine_factor(step, total_steps)

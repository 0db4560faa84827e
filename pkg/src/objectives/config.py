from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Optional

import torch

from src.mixing.mix import MIX_MODES
from src.utils.errors import InvalidArgumentError

OBJECTIVE_KINDS = (
    "standard",
    "oe",
    "oe_hard_mining",
    "energy_oe",
    "mix",
    "mixoe",
    "mix_plus_oe",
)
MIXING_KINDS = frozenset({"mix", "mixoe", "mix_plus_oe"})
OUTLIER_KINDS = frozenset({"oe", "oe_hard_mining", "energy_oe", "mixoe", "mix_plus_oe"})
ENERGY_HINGES = ("squared", "linear")
ENERGY_REDUCTIONS = ("sum", "mean")

# Defaults follow the determined values reported for the fine-grained benchmarks.
_KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "standard": {"beta": 0.0},
    "oe": {"beta": 1.0},
    "oe_hard_mining": {"beta": 1.0, "mining_pool_factor": 4},
    "energy_oe": {
        "beta": 0.1,
        "m_in": -13.0,
        "m_out": -7.0,
        "energy_hinge": "squared",
        "energy_reduction": "sum",
    },
    "mix": {"beta": 1.0, "alpha": 1.0, "mode": "linear"},
    "mixoe": {"beta": 5.0, "alpha": 1.0, "mode": "linear"},
    "mix_plus_oe": {"beta": 5.0, "alpha": 1.0, "mode": "linear", "beta_oe": 1.0},
}

_KIND_FIELDS = {
    "alpha": MIXING_KINDS,
    "mode": MIXING_KINDS,
    "m_in": frozenset({"energy_oe"}),
    "m_out": frozenset({"energy_oe"}),
    "energy_hinge": frozenset({"energy_oe"}),
    "energy_reduction": frozenset({"energy_oe"}),
    "mining_pool_factor": frozenset({"oe_hard_mining"}),
    "beta_oe": frozenset({"mix_plus_oe"}),
}


@dataclass(frozen=True)
class ObjectiveConfig:
    """
    Which training loss to optimize and its hyperparameters.

    Kind-specific fields are set exactly for the kinds that use them: mixing
    fields (alpha, mode) for mix/mixoe/mix_plus_oe, energy margins for
    energy_oe, the pool factor for oe_hard_mining and beta_oe (the OE weight)
    for mix_plus_oe, where beta weights the Mix term.
    """

    kind: str
    beta: float = 0.0
    alpha: Optional[float] = None
    mode: Optional[str] = None
    m_in: Optional[float] = None
    m_out: Optional[float] = None
    energy_hinge: Optional[str] = None
    energy_reduction: Optional[str] = None
    mining_pool_factor: Optional[int] = None
    beta_oe: Optional[float] = None

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise InvalidArgumentError(
                f"Unknown objective kind '{self.kind}', expected one of {OBJECTIVE_KINDS}"
            )
        if self.beta < 0:
            raise InvalidArgumentError(f"beta must be nonnegative, got {self.beta}")
        for name, kinds in _KIND_FIELDS.items():
            present = getattr(self, name) is not None
            if present != (self.kind in kinds):
                state = "requires" if self.kind in kinds else "does not take"
                raise InvalidArgumentError(f"Objective '{self.kind}' {state} '{name}'")
        if self.alpha is not None and not self.alpha > 0:
            raise InvalidArgumentError(f"alpha must be positive, got {self.alpha}")
        if self.mode is not None and self.mode not in MIX_MODES:
            raise InvalidArgumentError(f"mode must be one of {MIX_MODES}, got '{self.mode}'")
        if self.energy_hinge is not None and self.energy_hinge not in ENERGY_HINGES:
            raise InvalidArgumentError(f"energy_hinge must be one of {ENERGY_HINGES}")
        if self.energy_reduction is not None and self.energy_reduction not in ENERGY_REDUCTIONS:
            raise InvalidArgumentError(f"energy_reduction must be one of {ENERGY_REDUCTIONS}")
        if self.mining_pool_factor is not None and self.mining_pool_factor < 1:
            raise InvalidArgumentError("mining_pool_factor must be a positive integer")
        if self.beta_oe is not None and self.beta_oe < 0:
            raise InvalidArgumentError("beta_oe must be nonnegative")

    @classmethod
    def for_kind(cls, kind: str, **overrides) -> "ObjectiveConfig":
        """Build a config for `kind`, filling unspecified fields with defaults."""
        if kind not in _KIND_DEFAULTS:
            raise InvalidArgumentError(
                f"Unknown objective kind '{kind}', expected one of {OBJECTIVE_KINDS}"
            )
        values = dict(_KIND_DEFAULTS[kind])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind=kind, **values)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ObjectiveConfig":
        known = {f.name for f in fields(cls)}
        unknown = [k for k in data if k not in known]
        if unknown:
            raise InvalidArgumentError(f"Unknown objective config keys: {unknown}")
        if "kind" not in data:
            raise InvalidArgumentError("Objective config needs a 'kind'")
        rest = {k: v for k, v in data.items() if k != "kind"}
        return cls.for_kind(data["kind"], **rest)

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    @property
    def uses_mixing(self) -> bool:
        return self.kind in MIXING_KINDS

    @property
    def uses_outliers(self) -> bool:
        return self.kind in OUTLIER_KINDS

    @property
    def label(self) -> str:
        return f"{self.kind}-{self.mode}" if self.uses_mixing else self.kind


@dataclass
class LossValue:
    """A differentiable loss with its decomposition total = id_term + beta * reg_term."""

    total: torch.Tensor
    id_term: torch.Tensor
    reg_term: torch.Tensor
    beta: float
    records: dict[str, Any] = field(default_factory=dict)

    def item(self) -> dict[str, float]:
        return {
            "total": float(self.total.detach()),
            "id_term": float(self.id_term.detach()),
            "reg_term": float(self.reg_term.detach()),
        }

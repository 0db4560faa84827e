from src.objectives.base import (
    BaseObjective,
    EnergyOEObjective,
    HardMiningOEObjective,
    MixObjective,
    MixOEObjective,
    MixPlusOEObjective,
    OEObjective,
    StandardObjective,
)
from src.objectives.config import LossValue, ObjectiveConfig
from src.utils.errors import InvalidArgumentError

_OBJECTIVES: dict[str, type[BaseObjective]] = {
    "standard": StandardObjective,
    "oe": OEObjective,
    "oe_hard_mining": HardMiningOEObjective,
    "energy_oe": EnergyOEObjective,
    "mix": MixObjective,
    "mixoe": MixOEObjective,
    "mix_plus_oe": MixPlusOEObjective,
}


def create_objective(config: ObjectiveConfig) -> BaseObjective:
    """
    Creates the training objective described by a config.

    Returns:
        BaseObjective: An instance of the objective class registered for config.kind.
    """
    if config.kind in _OBJECTIVES:
        return _OBJECTIVES[config.kind](config)
    else:
        raise InvalidArgumentError(f"Invalid objective kind: {config.kind}")


__all__ = ["BaseObjective", "LossValue", "ObjectiveConfig", "create_objective"]

from typing import Optional

from src.scoring.scorers import (
    BaseScorer,
    EnergyScorer,
    MSPScorer,
    ODINScorer,
    score_energy,
    score_msp,
    score_odin,
)
from src.scoring.table import ORIGINS, ScoreTable
from src.utils.errors import InvalidArgumentError

SCORERS = ("msp", "odin", "energy")


def create_scorer(name: str, temperature: Optional[float] = None) -> BaseScorer:
    """
    Creates a post-hoc scorer by name.

    Args:
        name (str): "msp", "odin" or "energy".
        temperature (Optional[float]): Logit temperature; scorer default when None.

    Returns:
        BaseScorer: The configured scorer.
    """
    if name == "msp":
        return MSPScorer()
    elif name == "odin":
        return ODINScorer() if temperature is None else ODINScorer(temperature)
    elif name == "energy":
        return EnergyScorer() if temperature is None else EnergyScorer(temperature)
    else:
        raise InvalidArgumentError(f"Invalid scorer: {name}. Use one of {SCORERS}.")


__all__ = [
    "ORIGINS",
    "SCORERS",
    "BaseScorer",
    "EnergyScorer",
    "MSPScorer",
    "ODINScorer",
    "ScoreTable",
    "create_scorer",
    "score_energy",
    "score_msp",
    "score_odin",
]

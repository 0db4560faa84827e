"""
Post-hoc detection scores computed from logits.

All scores are oriented so that higher means more in-distribution.
"""

from abc import ABC, abstractmethod

import torch
import torch.nn.functional as F

from src.utils.errors import InvalidArgumentError, InvalidInputError


def _check_logits(logits: torch.Tensor) -> None:
    if logits.ndim < 1 or logits.shape[-1] < 1:
        raise InvalidInputError(f"Expected logits with a class axis, got shape {tuple(logits.shape)}")
    if not torch.isfinite(logits).all():
        raise InvalidInputError("Logits contain NaN or infinite values")


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise InvalidArgumentError(f"Temperature must be positive, got {tau}")


def score_msp(logits: torch.Tensor) -> torch.Tensor:
    """Maximum softmax probability over the last axis."""
    _check_logits(logits)
    return F.softmax(logits, dim=-1).max(dim=-1).values


def score_odin(logits: torch.Tensor, tau: float) -> torch.Tensor:
    """MSP of temperature-scaled logits; no input perturbation."""
    _check_tau(tau)
    _check_logits(logits)
    return F.softmax(logits / tau, dim=-1).max(dim=-1).values


def score_energy(logits: torch.Tensor, tau: float = 1.0) -> torch.Tensor:
    """Negative free energy, tau * logsumexp(logits / tau)."""
    _check_tau(tau)
    _check_logits(logits)
    return tau * torch.logsumexp(logits / tau, dim=-1)


class BaseScorer(ABC):
    name: str = ""

    def __init__(self, temperature: float = 1.0):
        _check_tau(temperature)
        self.temperature = temperature

    @abstractmethod
    def score(self, logits: torch.Tensor) -> torch.Tensor:
        """
        Score a batch of logits, higher = more ID.
        """
        raise NotImplementedError("Subclasses must implement this method")

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(temperature={self.temperature})"


class MSPScorer(BaseScorer):
    name = "msp"

    def score(self, logits: torch.Tensor) -> torch.Tensor:
        return score_msp(logits)


class ODINScorer(BaseScorer):
    name = "odin"

    def __init__(self, temperature: float = 1000.0):
        super().__init__(temperature)

    def score(self, logits: torch.Tensor) -> torch.Tensor:
        return score_odin(logits, self.temperature)


class EnergyScorer(BaseScorer):
    name = "energy"

    def score(self, logits: torch.Tensor) -> torch.Tensor:
        return score_energy(logits, self.temperature)

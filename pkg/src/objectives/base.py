from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from src.objectives.config import LossValue, ObjectiveConfig
from src.objectives.losses import (
    IdBatch,
    loss_energy_oe,
    loss_mix,
    loss_mix_plus_oe,
    loss_mixoe,
    loss_oe,
    loss_oe_hard_mining,
    loss_standard,
)


class BaseObjective(ABC):
    def __init__(self, config: ObjectiveConfig):
        """
        Initialize the objective from its config.
        """
        self.config = config

    @property
    def uses_outliers(self) -> bool:
        return self.config.uses_outliers

    def outlier_request_size(self, outlier_batch_size: int) -> int:
        """
        Number of outliers the trainer must draw per step.
        """
        return outlier_batch_size if self.uses_outliers else 0

    @abstractmethod
    def compute(
        self,
        model: nn.Module,
        id_batch: IdBatch,
        outlier_batch: Optional[torch.Tensor] = None,
        rng: Optional[np.random.Generator] = None,
        lam: Optional[float] = None,
    ) -> LossValue:
        """
        Compute the loss of one training step.
        """
        raise NotImplementedError("Subclasses must implement this method")


class StandardObjective(BaseObjective):
    def compute(self, model, id_batch, outlier_batch=None, rng=None, lam=None) -> LossValue:
        return loss_standard(model, id_batch)


class OEObjective(BaseObjective):
    def compute(self, model, id_batch, outlier_batch=None, rng=None, lam=None) -> LossValue:
        return loss_oe(model, id_batch, outlier_batch, self.config.beta)


class HardMiningOEObjective(BaseObjective):
    def outlier_request_size(self, outlier_batch_size: int) -> int:
        return outlier_batch_size * self.config.mining_pool_factor

    def compute(self, model, id_batch, outlier_batch=None, rng=None, lam=None) -> LossValue:
        k = outlier_batch.shape[0] // self.config.mining_pool_factor
        return loss_oe_hard_mining(model, id_batch, outlier_batch, self.config.beta, max(k, 1))


class EnergyOEObjective(BaseObjective):
    def compute(self, model, id_batch, outlier_batch=None, rng=None, lam=None) -> LossValue:
        c = self.config
        return loss_energy_oe(
            model,
            id_batch,
            outlier_batch,
            c.m_in,
            c.m_out,
            c.beta,
            hinge=c.energy_hinge,
            reduction=c.energy_reduction,
        )


class MixObjective(BaseObjective):
    def compute(self, model, id_batch, outlier_batch=None, rng=None, lam=None) -> LossValue:
        c = self.config
        return loss_mix(model, id_batch, c.alpha, c.beta, c.mode, rng, lam)


class MixOEObjective(BaseObjective):
    def compute(self, model, id_batch, outlier_batch=None, rng=None, lam=None) -> LossValue:
        c = self.config
        return loss_mixoe(model, id_batch, outlier_batch, c.alpha, c.beta, c.mode, rng, lam)


class MixPlusOEObjective(BaseObjective):
    def compute(self, model, id_batch, outlier_batch=None, rng=None, lam=None) -> LossValue:
        c = self.config
        return loss_mix_plus_oe(
            model, id_batch, outlier_batch, c.alpha, c.beta, c.beta_oe, c.mode, rng, lam
        )

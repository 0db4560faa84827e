"""
Training losses for ID classification plus an outlier regularizer.

Every loss takes a model, an ID batch ``(inputs, labels)`` and, where needed,
an outlier input batch, and returns a LossValue whose total is exactly
``id_term + beta * reg_term``.
"""

from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.mixing.mix import (
    MixMode,
    make_id_mix_pair,
    make_virtual_outlier,
    one_hot,
    sample_lambda,
)
from src.objectives.config import LossValue
from src.utils.errors import InvalidArgumentError

IdBatch = tuple[torch.Tensor, torch.Tensor]


def cross_entropy_soft(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Batch mean of -sum_k target_k * log softmax(logits)_k."""
    if target.shape != logits.shape:
        raise InvalidArgumentError(
            f"Target shape {tuple(target.shape)} does not match logits {tuple(logits.shape)}"
        )
    if torch.any(target < 0) or torch.any((target.sum(dim=-1) - 1.0).abs() > 1e-6):
        raise InvalidArgumentError("Targets must be probability vectors")
    return -(target * F.log_softmax(logits, dim=-1)).sum(dim=-1).mean()


def _uniform_like(logits: torch.Tensor) -> torch.Tensor:
    return torch.full_like(logits, 1.0 / logits.shape[-1])


def _check_id_batch(id_batch: IdBatch) -> None:
    inputs, labels = id_batch
    if inputs.shape[0] == 0:
        raise InvalidArgumentError("ID batch is empty")
    if labels is None or labels.shape[0] != inputs.shape[0]:
        raise InvalidArgumentError("ID batch needs one label per input")


def _check_outliers(outlier_batch: Optional[torch.Tensor]) -> None:
    if outlier_batch is None or outlier_batch.shape[0] == 0:
        raise InvalidArgumentError("Outlier batch is empty")


def _zero(logits: torch.Tensor) -> torch.Tensor:
    return logits.new_zeros(())


def energy(logits: torch.Tensor) -> torch.Tensor:
    """Free energy E(x) = -log sum_k exp(logit_k)."""
    return -torch.logsumexp(logits, dim=-1)


def loss_standard(model: nn.Module, id_batch: IdBatch) -> LossValue:
    _check_id_batch(id_batch)
    inputs, labels = id_batch
    logits = model(inputs)
    id_term = F.cross_entropy(logits, labels)
    return LossValue(total=id_term, id_term=id_term, reg_term=_zero(logits), beta=0.0)


def oe_regularizer(model: nn.Module, outlier_batch: torch.Tensor) -> torch.Tensor:
    """Cross-entropy from the outlier predictions to the uniform distribution."""
    logits = model(outlier_batch)
    return cross_entropy_soft(logits, _uniform_like(logits))


def loss_oe(
    model: nn.Module, id_batch: IdBatch, outlier_batch: torch.Tensor, beta: float
) -> LossValue:
    _check_id_batch(id_batch)
    _check_outliers(outlier_batch)
    inputs, labels = id_batch
    id_term = F.cross_entropy(model(inputs), labels)
    reg_term = oe_regularizer(model, outlier_batch)
    return LossValue(
        total=id_term + beta * reg_term, id_term=id_term, reg_term=reg_term, beta=beta
    )


def hard_outlier_indices(model: nn.Module, pool_batch: torch.Tensor, k: int) -> torch.Tensor:
    """Positions of the k most ID-like outliers (highest MSP), ties broken by input order."""
    if k < 0 or k > pool_batch.shape[0]:
        raise InvalidArgumentError(
            f"Cannot select {k} hard outliers from a pool of {pool_batch.shape[0]}"
        )
    with torch.no_grad():
        msp = F.softmax(model(pool_batch), dim=-1).max(dim=-1).values
    order = torch.sort(msp, descending=True, stable=True).indices
    return order[:k].sort().values


def select_hard_outliers(model: nn.Module, pool_batch: torch.Tensor, k: int) -> torch.Tensor:
    return pool_batch[hard_outlier_indices(model, pool_batch, k)]


def loss_oe_hard_mining(
    model: nn.Module,
    id_batch: IdBatch,
    pool_batch: torch.Tensor,
    beta: float,
    k: int,
) -> LossValue:
    """OE on the k hardest outliers of a candidate pool, re-mined at every step."""
    _check_outliers(pool_batch)
    index = hard_outlier_indices(model, pool_batch, k)
    loss = loss_oe(model, id_batch, pool_batch[index], beta)
    loss.records["selected"] = index.tolist()
    return loss


def loss_energy_oe(
    model: nn.Module,
    id_batch: IdBatch,
    outlier_batch: torch.Tensor,
    m_in: float,
    m_out: float,
    beta: float,
    hinge: str = "squared",
    reduction: str = "sum",
) -> LossValue:
    """
    Energy-margin fine-tuning objective.

    ID energies above `m_in` and outlier energies below `m_out` are penalised
    by (squared) hinges. The two hinge means are summed, or averaged with
    reduction="mean".
    """
    _check_id_batch(id_batch)
    _check_outliers(outlier_batch)
    inputs, labels = id_batch
    logits_in = model(inputs)
    logits_out = model(outlier_batch)
    id_term = F.cross_entropy(logits_in, labels)

    hinge_in = F.relu(energy(logits_in) - m_in)
    hinge_out = F.relu(m_out - energy(logits_out))
    if hinge == "squared":
        hinge_in, hinge_out = hinge_in.pow(2), hinge_out.pow(2)
    elif hinge != "linear":
        raise InvalidArgumentError(f"Unknown energy hinge '{hinge}'")
    reg_term = hinge_in.mean() + hinge_out.mean()
    if reduction == "mean":
        reg_term = 0.5 * reg_term
    elif reduction != "sum":
        raise InvalidArgumentError(f"Unknown energy reduction '{reduction}'")
    return LossValue(
        total=id_term + beta * reg_term, id_term=id_term, reg_term=reg_term, beta=beta
    )


def loss_mixoe(
    model: nn.Module,
    id_batch: IdBatch,
    outlier_batch: torch.Tensor,
    alpha: float,
    beta: float,
    mode: MixMode,
    rng: np.random.Generator,
    lam: Optional[float] = None,
) -> LossValue:
    """
    ID cross-entropy plus cross-entropy on virtual outliers.

    The i-th ID example is mixed with the i-th outlier using one lambda drawn
    from Beta(alpha, alpha) for the whole batch. `lam` pins lambda and exists
    only to check the endpoints.
    """
    _check_id_batch(id_batch)
    _check_outliers(outlier_batch)
    inputs, labels = id_batch
    if outlier_batch.shape[0] != inputs.shape[0]:
        raise InvalidArgumentError(
            f"MixOE pairs ID and outlier examples one-to-one; got batch sizes "
            f"{inputs.shape[0]} and {outlier_batch.shape[0]}"
        )
    logits_in = model(inputs)
    id_term = F.cross_entropy(logits_in, labels)

    if lam is None:
        lam = sample_lambda(alpha, rng).lam
    sample = make_virtual_outlier(
        inputs,
        one_hot(labels, logits_in.shape[-1], dtype=logits_in.dtype),
        outlier_batch,
        lam,
        mode,
        rng,
        alpha,
    )
    reg_term = cross_entropy_soft(model(sample.input), sample.target.probs)
    return LossValue(
        total=id_term + beta * reg_term,
        id_term=id_term,
        reg_term=reg_term,
        beta=beta,
        records=sample.log_record(),
    )


def _mix_regularizer(
    model: nn.Module,
    id_batch: IdBatch,
    num_classes: int,
    dtype: torch.dtype,
    alpha: float,
    mode: MixMode,
    rng: np.random.Generator,
    lam: Optional[float],
) -> tuple[torch.Tensor, dict]:
    inputs, labels = id_batch
    if lam is None:
        lam = sample_lambda(alpha, rng).lam
    partner = torch.as_tensor(rng.permutation(inputs.shape[0]), dtype=torch.long)
    targets = one_hot(labels, num_classes, dtype=dtype)
    pair = make_id_mix_pair(
        inputs, targets, inputs[partner], targets[partner], lam, mode, rng, alpha
    )
    return cross_entropy_soft(model(pair.input), pair.target.probs), pair.log_record()


def loss_mix(
    model: nn.Module,
    id_batch: IdBatch,
    alpha: float,
    beta: float,
    mode: MixMode,
    rng: np.random.Generator,
    lam: Optional[float] = None,
) -> LossValue:
    """ID cross-entropy plus cross-entropy on ID-ID mixtures with interpolated labels."""
    _check_id_batch(id_batch)
    inputs, labels = id_batch
    if inputs.shape[0] < 2:
        raise InvalidArgumentError("Mixing ID data needs at least two examples per batch")
    logits = model(inputs)
    id_term = F.cross_entropy(logits, labels)
    reg_term, record = _mix_regularizer(
        model, id_batch, logits.shape[-1], logits.dtype, alpha, mode, rng, lam
    )
    return LossValue(
        total=id_term + beta * reg_term,
        id_term=id_term,
        reg_term=reg_term,
        beta=beta,
        records=record,
    )


def loss_mix_plus_oe(
    model: nn.Module,
    id_batch: IdBatch,
    outlier_batch: torch.Tensor,
    alpha: float,
    beta_mix: float,
    beta_oe: float,
    mode: MixMode,
    rng: np.random.Generator,
    lam: Optional[float] = None,
) -> LossValue:
    """
    Naive sum of the Mix and OE regularizers.

    Kept as an ablation: ID-ID mixtures ask for high confidence where OE asks
    for uniform predictions, which conflicts near the ID manifold. The
    combined regularizer is reported as reg_term with beta = 1.
    """
    mix = loss_mix(model, id_batch, alpha, beta_mix, mode, rng, lam)
    _check_outliers(outlier_batch)
    oe_reg = oe_regularizer(model, outlier_batch)
    reg_term = beta_mix * mix.reg_term + beta_oe * oe_reg
    records = dict(mix.records)
    records.update(
        {"mix_reg": float(mix.reg_term.detach()), "oe_reg": float(oe_reg.detach())}
    )
    return LossValue(
        total=mix.id_term + reg_term,
        id_term=mix.id_term,
        reg_term=reg_term,
        beta=1.0,
        records=records,
    )

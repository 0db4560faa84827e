"""Standard training and outlier-exposure fine-tuning loops."""

import logging
from typing import Optional

import numpy as np
import torch
from torch.optim import SGD
from torch.optim.lr_scheduler import LambdaLR
from tqdm import tqdm

from src.data.examples import ExampleSet
from src.data.splits import DataPartition, OutlierPool
from src.eval.metrics import accuracy
from src.models.checkpoint import Checkpoint
from src.models.networks import ModelContract, compute_logits
from src.objectives import BaseObjective, create_objective
from src.training.config import TrainConfig, cosine_factor
from src.utils.errors import InvalidArgumentError, TrainingDivergenceError

logger = logging.getLogger(__name__)


class OutlierStream:
    """
    Endless batches from an outlier pool.

    The pool is reshuffled with its own generator at every training epoch and
    whenever it runs out mid-epoch. Distinct consumed identities are counted.
    """

    def __init__(self, pool: ExampleSet, batch_size: int, generator: torch.Generator):
        if len(pool) < batch_size:
            raise InvalidArgumentError(
                f"Outlier pool has {len(pool)} examples, fewer than one batch of {batch_size}"
            )
        self.pool = pool
        self.batch_size = batch_size
        self.generator = generator
        self.consumed: set[str] = set()
        self.draws = 0
        self._order = torch.randperm(len(pool), generator=generator)
        self._cursor = 0

    def new_epoch(self) -> None:
        self._order = torch.randperm(len(self.pool), generator=self.generator)
        self._cursor = 0

    def next_batch(self) -> torch.Tensor:
        if self._cursor + self.batch_size > len(self.pool):
            self.new_epoch()
        index = self._order[self._cursor : self._cursor + self.batch_size]
        self._cursor += self.batch_size
        self.draws += self.batch_size
        self.consumed.update(self.pool.ids[i] for i in index.tolist())
        inputs, _ = self.pool.batch(index)
        return inputs


def evaluate_accuracy(model: torch.nn.Module, examples: ExampleSet) -> Optional[float]:
    if len(examples) == 0:
        return None
    logits = compute_logits(model, examples.inputs)
    return accuracy(logits.argmax(dim=-1).numpy(), examples.labels.numpy())


def _fit(
    model: ModelContract,
    partition: DataPartition,
    config: TrainConfig,
    objective: BaseObjective,
    outlier_stream: Optional[OutlierStream],
) -> dict:
    n_train = len(partition.train)
    if n_train == 0:
        raise InvalidArgumentError("Training partition is empty")
    steps = config.steps_per_epoch(n_train)
    total_steps = steps * config.epochs
    batch_size = config.effective_id_batch_size(n_train)

    id_generator = torch.Generator().manual_seed(config.seed)
    mix_rng = np.random.default_rng([config.seed, 1])
    opt = config.optimizer
    optimizer = SGD(
        model.parameters(), lr=opt.lr, momentum=opt.momentum, weight_decay=opt.weight_decay
    )
    scheduler = LambdaLR(optimizer, lambda t: cosine_factor(t, total_steps))

    history: dict = {
        "train_loss": [],
        "id_term": [],
        "reg_term": [],
        "val_accuracy": [],
        "lr": [],
        "batch_log": [],
    }
    train_inputs = partition.train.inputs
    train_labels = partition.train.labels
    model.train()

    for epoch in tqdm(range(config.epochs), desc=f"{config.phase} ({objective.config.kind})"):
        order = torch.randperm(n_train, generator=id_generator)
        if outlier_stream is not None:
            outlier_stream.new_epoch()
        sums = {"total": 0.0, "id_term": 0.0, "reg_term": 0.0}

        for step in range(steps):
            index = order[step * batch_size : (step + 1) * batch_size]
            id_batch = (train_inputs[index], train_labels[index])
            outliers = outlier_stream.next_batch() if outlier_stream is not None else None

            loss = objective.compute(model, id_batch, outliers, mix_rng)
            if not torch.isfinite(loss.total):
                raise TrainingDivergenceError(
                    f"Loss became {float(loss.total)} at epoch {epoch}, step {step} "
                    f"({objective.config.kind}, lr={optimizer.param_groups[0]['lr']:.3g})"
                )
            history["lr"].append(optimizer.param_groups[0]["lr"])
            optimizer.zero_grad()
            loss.total.backward()
            optimizer.step()
            scheduler.step()

            for key, value in loss.item().items():
                sums[key] += value
            if loss.records:
                history["batch_log"].append({"epoch": epoch, "step": step, **loss.records})

        history["train_loss"].append(sums["total"] / steps)
        history["id_term"].append(sums["id_term"] / steps)
        history["reg_term"].append(sums["reg_term"] / steps)
        val_acc = evaluate_accuracy(model, partition.validation)
        history["val_accuracy"].append(val_acc)
        model.train()
        logger.info(
            f"[{config.phase}] epoch {epoch + 1}/{config.epochs} "
            f"loss={history['train_loss'][-1]:.4f} id={history['id_term'][-1]:.4f} "
            f"reg={history['reg_term'][-1]:.4f} lr={history['lr'][-1]:.2e} "
            f"val_acc={val_acc if val_acc is None else round(val_acc, 4)}"
        )

    history["final_lr"] = optimizer.param_groups[0]["lr"]
    model.eval()
    return history


def train_standard(
    model: ModelContract, partition: DataPartition, config: TrainConfig
) -> Checkpoint:
    """
    Train with cross-entropy on the ID training split.

    The learning rate decays from config.optimizer.lr to 0 with a per-step
    cosine schedule. Per-epoch loss and validation accuracy are recorded.

    Args:
        model (ModelContract): Freshly initialised model, updated in place.
        partition (DataPartition): ID train/validation/test data.
        config (TrainConfig): A config with phase "standard".

    Returns:
        Checkpoint: Completed standard-phase checkpoint.
    """
    if config.phase != "standard":
        raise InvalidArgumentError(f"train_standard needs phase 'standard', got '{config.phase}'")
    objective = create_objective(config.objective)
    history = _fit(model, partition, config, objective, outlier_stream=None)
    return Checkpoint(
        phase="standard",
        state_dict=model.get_parameters(),
        config_hash=config.hash(),
        completed=True,
        history=history,
    )


def finetune(
    model: ModelContract,
    partition: DataPartition,
    outlier_pool: Optional[OutlierPool],
    config: TrainConfig,
    init_checkpoint: Checkpoint,
) -> Checkpoint:
    """
    Fine-tune a standard checkpoint with the configured objective.

    The outlier stream is drawn only from `outlier_pool`; the schedule restarts
    from config.optimizer.lr.

    Args:
        model (ModelContract): Model to load the checkpoint into.
        partition (DataPartition): ID data.
        outlier_pool (Optional[OutlierPool]): Filtered training outliers; not
            needed by ID-only objectives.
        config (TrainConfig): A config with phase "finetune".
        init_checkpoint (Checkpoint): Completed standard-phase checkpoint.

    Returns:
        Checkpoint: Fine-tuned checkpoint, with outlier consumption bookkeeping.
    """
    if config.phase != "finetune":
        raise InvalidArgumentError(f"finetune needs phase 'finetune', got '{config.phase}'")
    if init_checkpoint.phase != "standard" or not init_checkpoint.completed:
        raise InvalidArgumentError("Fine-tuning must start from a completed standard checkpoint")
    model.set_parameters(init_checkpoint.state_dict)

    objective = create_objective(config.objective)
    stream = None
    if objective.uses_outliers:
        if outlier_pool is None:
            raise InvalidArgumentError(f"Objective '{config.objective.kind}' needs an outlier pool")
        n_train = len(partition.train)
        request = objective.outlier_request_size(config.effective_outlier_batch_size(n_train))
        stream = OutlierStream(
            outlier_pool.examples,
            request,
            torch.Generator().manual_seed(config.seed + 1),
        )
    history = _fit(model, partition, config, objective, stream)
    if stream is not None:
        steps = config.steps_per_epoch(len(partition.train))
        history["consumed_outliers"] = len(stream.consumed)
        history["outlier_draws"] = stream.draws
        history["max_outliers"] = config.epochs * steps * stream.batch_size
        logger.info(
            f"Fine-tuning consumed {history['consumed_outliers']} distinct outliers "
            f"(at most {history['max_outliers']})"
        )
    return Checkpoint(
        phase="finetune",
        state_dict=model.get_parameters(),
        config_hash=config.hash(),
        completed=True,
        history=history,
    )

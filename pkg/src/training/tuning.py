"""Hyperparameter selection on ID validation and outlier validation data."""

import dataclasses
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Optional, Sequence

import numpy as np

from src.data.examples import ExampleSet
from src.data.splits import DataPartition, OutlierPool
from src.eval.metrics import auroc
from src.models.checkpoint import Checkpoint
from src.models.networks import ModelContract, compute_logits
from src.objectives.config import ObjectiveConfig
from src.scoring import create_scorer, score_msp
from src.training.config import TrainConfig
from src.training.trainer import evaluate_accuracy, finetune
from src.utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# Candidate values per objective kind; fixed values ride along as one-element lists.
DEFAULT_SEARCH_SPACES: dict[str, dict[str, list]] = {
    "oe": {"beta": [0.5, 1.0, 5.0]},
    "oe_hard_mining": {"beta": [0.5, 1.0, 5.0]},
    "energy_oe": {"beta": [0.1], "m_in": [-9.0, -13.0, -17.0], "m_out": [-5.0, -7.0, -9.0]},
    "mix": {"alpha": [0.4, 1.0, 2.0], "beta": [0.5, 1.0, 5.0]},
    "mixoe": {"alpha": [0.4, 1.0, 2.0], "beta": [0.5, 1.0, 5.0]},
    "mix_plus_oe": {"alpha": [0.4, 1.0, 2.0], "beta": [0.5, 1.0, 5.0]},
}
DEFAULT_TEMPERATURES: dict[str, list[float]] = {
    "odin": [10.0, 100.0, 1000.0],
    "energy": [1.0, 10.0, 100.0],
}


@dataclass
class TrialResult:
    params: dict[str, Any]
    auroc: float
    accuracy: Optional[float] = None
    accuracy_drop: Optional[float] = None
    qualified: bool = True
    config: Optional[ObjectiveConfig] = None


@dataclass
class TuningResult:
    best: ObjectiveConfig
    trials: list[TrialResult] = field(default_factory=list)
    flagged: bool = False
    split_index: int = 1
    baseline_accuracy: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "best": self.best.to_dict(),
            "flagged": self.flagged,
            "split_index": self.split_index,
            "baseline_accuracy": self.baseline_accuracy,
            "trials": [
                {k: v for k, v in dataclasses.asdict(t).items() if k != "config"}
                for t in self.trials
            ],
        }


def _candidates(search_space: Mapping[str, Sequence]) -> Iterator[dict[str, Any]]:
    keys = list(search_space.keys())
    for combo in itertools.product(*(search_space[key] for key in keys)):
        yield dict(zip(keys, combo))


def expand_grid(
    kind: str, search_space: Optional[Mapping[str, Sequence]] = None, **fixed
) -> list[ObjectiveConfig]:
    """
    Expand a search space into objective configs by Cartesian product.

    Args:
        kind (str): Objective kind.
        search_space (Optional[Mapping[str, Sequence]]): Candidate values per
            field; the default space of `kind` when None.
        **fixed: Values applied to every candidate, such as mode="cut".

    Returns:
        list[ObjectiveConfig]: One config per combination, in product order.
    """
    space = DEFAULT_SEARCH_SPACES.get(kind, {}) if search_space is None else search_space
    return [ObjectiveConfig.for_kind(kind, **fixed, **params) for params in _candidates(space)]


def load_grid(data: Any) -> list[ObjectiveConfig]:
    """
    Read a grid document: either a list of objective configs or
    {"kind": ..., "search_space": {...}, "fixed": {...}}.
    """
    if isinstance(data, list):
        return [ObjectiveConfig.from_dict(item) for item in data]
    if isinstance(data, dict) and "kind" in data:
        unknown = set(data) - {"kind", "search_space", "fixed"}
        if unknown:
            raise InvalidArgumentError(f"Unknown grid keys: {sorted(unknown)}")
        return expand_grid(data["kind"], data.get("search_space"), **data.get("fixed", {}))
    raise InvalidArgumentError("A grid must be a list of objective configs or a search space")


def select_config(
    trials: Sequence[TrialResult], baseline_accuracy: Optional[float], max_drop: float = 1.0
) -> tuple[TrialResult, bool]:
    """
    Pick the max-AUROC trial among those within `max_drop` accuracy points of the baseline.

    Ties go to higher accuracy, then to grid order. When no trial qualifies the
    max-AUROC trial is returned and flagged.

    Returns:
        tuple[TrialResult, bool]: The chosen trial and whether it is flagged.
    """
    if not trials:
        raise InvalidArgumentError("Cannot select from an empty set of trials")
    for trial in trials:
        if baseline_accuracy is None or trial.accuracy is None:
            trial.accuracy_drop = None
            trial.qualified = True
        else:
            trial.accuracy_drop = 100.0 * (baseline_accuracy - trial.accuracy)
            trial.qualified = trial.accuracy_drop <= max_drop + 1e-12

    def _key(trial: TrialResult) -> tuple[float, float]:
        return (trial.auroc, -np.inf if trial.accuracy is None else trial.accuracy)

    qualified = [t for t in trials if t.qualified]
    pool = qualified if qualified else list(trials)
    best = pool[0]
    for trial in pool[1:]:
        if _key(trial) > _key(best):
            best = trial
    return best, not qualified


def validation_auroc(model: ModelContract, id_val: ExampleSet, outlier_val: ExampleSet) -> float:
    """MSP AUROC of ID validation (positive) against outlier validation (negative)."""
    id_scores = score_msp(compute_logits(model, id_val.inputs)).double().numpy()
    ood_scores = score_msp(compute_logits(model, outlier_val.inputs)).double().numpy()
    return auroc(id_scores, ood_scores)


def tune_hyperparams(
    grid: Sequence[ObjectiveConfig],
    model_factory: Callable[[], ModelContract],
    partition: DataPartition,
    outlier_pools: Mapping[str, OutlierPool],
    tuning_split_index: int,
    base_checkpoint: Checkpoint,
    train_config: TrainConfig,
    max_drop: float = 1.0,
) -> TuningResult:
    """
    Fine-tune one model per grid point on a single split and choose one config.

    The chosen config is meant to be reused on every split of the dataset.

    Args:
        grid (Sequence[ObjectiveConfig]): Candidate objectives.
        model_factory (Callable[[], ModelContract]): Builds a fresh model to load
            the standard checkpoint into.
        partition (DataPartition): ID data of the tuning split.
        outlier_pools (Mapping[str, OutlierPool]): "train" and "validation" pools.
        tuning_split_index (int): Index of the tuning split, recorded in the result.
        base_checkpoint (Checkpoint): Completed standard checkpoint of that split.
        train_config (TrainConfig): Fine-tuning config; its objective is replaced
            per grid point.
        max_drop (float): Allowed ID validation accuracy drop in points.

    Returns:
        TuningResult: Chosen config, per-trial scores and the flag.
    """
    if not grid:
        raise InvalidArgumentError("Hyperparameter grid is empty")
    if "validation" not in outlier_pools:
        raise InvalidArgumentError("Tuning needs an outlier 'validation' pool")
    if len(outlier_pools["validation"]) == 0:
        raise InvalidArgumentError("Tuning needs a nonempty outlier validation split")
    if len(partition.validation) == 0:
        raise InvalidArgumentError("Tuning needs a nonempty ID validation split")

    baseline = model_factory()
    baseline.set_parameters(base_checkpoint.state_dict)
    baseline.eval()
    baseline_accuracy = evaluate_accuracy(baseline, partition.validation)
    logger.info(f"Tuning on split {tuning_split_index}: baseline val accuracy {baseline_accuracy:.4f}")

    trials: list[TrialResult] = []
    for i, candidate in enumerate(grid):
        config = dataclasses.replace(train_config, objective=candidate, outlier_batch_size=None)
        model = model_factory()
        checkpoint = finetune(model, partition, outlier_pools.get("train"), config, base_checkpoint)
        model.set_parameters(checkpoint.state_dict)
        model.eval()
        trial = TrialResult(
            params=candidate.to_dict(),
            auroc=validation_auroc(model, partition.validation, outlier_pools["validation"].examples),
            accuracy=evaluate_accuracy(model, partition.validation),
            config=candidate,
        )
        trials.append(trial)
        logger.info(f"Grid point {i + 1}/{len(grid)} {trial.params}: AUROC={trial.auroc:.4f} acc={trial.accuracy:.4f}")

    best, flagged = select_config(trials, baseline_accuracy, max_drop)
    if flagged:
        logger.warning(
            f"No grid point kept ID accuracy within {max_drop} points; using max-AUROC config {best.params}"
        )
    else:
        logger.info(f"Selected {best.params}")
    return TuningResult(
        best=best.config,
        trials=trials,
        flagged=flagged,
        split_index=tuning_split_index,
        baseline_accuracy=baseline_accuracy,
    )


def tune_temperature(
    scorer_name: str,
    model: ModelContract,
    id_val: ExampleSet,
    outlier_val: ExampleSet,
    taus: Optional[Sequence[float]] = None,
) -> tuple[float, list[TrialResult]]:
    """
    Choose the scorer temperature with the highest validation AUROC.

    Ties keep the earlier temperature in `taus`.
    """
    taus = list(DEFAULT_TEMPERATURES.get(scorer_name, [1.0]) if taus is None else taus)
    if not taus:
        raise InvalidArgumentError("Temperature grid is empty")
    if len(id_val) == 0:
        raise InvalidArgumentError("Temperature tuning needs a nonempty ID validation split")
    if len(outlier_val) == 0:
        raise InvalidArgumentError("Temperature tuning needs a nonempty outlier validation split")
    id_logits = compute_logits(model, id_val.inputs)
    ood_logits = compute_logits(model, outlier_val.inputs)

    trials = []
    for tau in taus:
        scorer = create_scorer(scorer_name, tau)
        value = auroc(scorer.score(id_logits).double().numpy(), scorer.score(ood_logits).double().numpy())
        trials.append(TrialResult(params={"temperature": tau}, auroc=value))
    best = max(range(len(trials)), key=lambda i: (trials[i].auroc, -i))
    logger.info(f"{scorer_name} temperature {taus[best]} selected (AUROC={trials[best].auroc:.4f})")
    return float(taus[best]), trials

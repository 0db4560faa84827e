"""
Detection and classification metrics.

ID examples are the positive class. A score at or above the detection
threshold counts as ID.
"""

import logging
import os
from dataclasses import dataclass, field, fields
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata
from sklearn.metrics import accuracy_score

from src.data.splits import EnvironmentSpec
from src.scoring.table import ScoreTable
from src.utils.common import read_json, write_json
from src.utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

THRESHOLD_CONVENTION = (
    "theta = largest observed ID score with fraction(ID >= theta) >= tpr; "
    "OOD counted as rejected iff score < theta; AUROC ties count 1/2"
)


def _as_scores(values: Sequence[float], what: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64).reshape(-1)
    if array.size == 0:
        raise InvalidArgumentError(f"{what} scores are empty")
    return array


def auroc(id_scores: Sequence[float], ood_scores: Sequence[float]) -> float:
    """
    Probability that a random ID score beats a random OOD score, ties counting 1/2.

    Computed with the rank-sum (Mann-Whitney U) identity, which equals the
    trapezoidal area under the ROC curve.
    """
    id_arr = _as_scores(id_scores, "ID")
    ood_arr = _as_scores(ood_scores, "OOD")
    n, m = id_arr.size, ood_arr.size
    ranks = rankdata(np.concatenate([id_arr, ood_arr]), method="average")
    u_statistic = ranks[:n].sum() - n * (n + 1) / 2.0
    return float(u_statistic / (n * m))


def _needed_count(n: int, tpr_target: float) -> int:
    """Smallest count c with c / n >= tpr_target."""
    count = min(max(int(np.ceil(tpr_target * n)), 1), n)
    while count > 1 and (count - 1) / n >= tpr_target:
        count -= 1
    while count < n and count / n < tpr_target:
        count += 1
    return count


def detection_threshold(id_scores: Sequence[float], tpr_target: float = 0.95) -> float:
    """Largest observed ID score that still accepts at least `tpr_target` of ID."""
    id_arr = _as_scores(id_scores, "ID")
    if not 0.0 < tpr_target <= 1.0:
        raise InvalidArgumentError(f"tpr_target must be in (0, 1], got {tpr_target}")
    descending = np.sort(id_arr)[::-1]
    return float(descending[_needed_count(id_arr.size, tpr_target) - 1])


def tnr_at_tpr(
    id_scores: Sequence[float], ood_scores: Sequence[float], tpr_target: float = 0.95
) -> float:
    """Fraction of OOD scores strictly below the detection threshold."""
    ood_arr = _as_scores(ood_scores, "OOD")
    theta = detection_threshold(id_scores, tpr_target)
    return float(np.mean(ood_arr < theta))


def accuracy(predicted_labels: Sequence[int], true_labels: Sequence[int]) -> float:
    predicted = np.asarray(predicted_labels).reshape(-1)
    true = np.asarray(true_labels).reshape(-1)
    if predicted.size != true.size:
        raise InvalidArgumentError(
            f"Got {predicted.size} predictions for {true.size} labels"
        )
    if predicted.size == 0:
        raise InvalidArgumentError("Cannot compute accuracy of an empty prediction set")
    return float(accuracy_score(true, predicted))


@dataclass
class DetectionReport:
    """Detection metrics of one (environment, scorer, objective); None marks a missing origin."""

    dataset_name: str
    split_index: int
    scorer: str
    objective: str = ""
    temperature: float = 1.0
    tnr95_coarse: Optional[float] = None
    tnr95_fine: Optional[float] = None
    auroc_coarse: Optional[float] = None
    auroc_fine: Optional[float] = None
    id_accuracy: Optional[float] = None
    n_id: int = 0
    n_fine: int = 0
    n_coarse: int = 0
    tpr_target: float = 0.95
    environment_seed: Optional[int] = None
    mean_confidence: dict[str, float] = field(default_factory=dict)
    convention: str = THRESHOLD_CONVENTION

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DetectionReport":
        return cls(**data)

    def save(self, path: str) -> str:
        write_json(self.to_dict(), path)
        return path

    @classmethod
    def load(cls, path: str) -> "DetectionReport":
        return cls.from_dict(read_json(path))

    def csv_row(self) -> dict[str, Any]:
        row = {k: v for k, v in self.to_dict().items() if k not in ("mean_confidence", "convention")}
        for origin, value in sorted(self.mean_confidence.items()):
            row[f"mean_confidence_{origin}"] = value
        return row


def write_reports_csv(reports: Sequence[DetectionReport], path: str) -> str:
    """One flat row per (environment, scorer, objective)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    pd.DataFrame([r.csv_row() for r in reports]).to_csv(path, index=False)
    return path


def build_report(
    score_table: ScoreTable,
    predictions: Optional[Sequence[int]],
    labels: Optional[Sequence[int]],
    env: Optional[EnvironmentSpec],
    objective: str = "",
    tpr_target: float = 0.95,
    mean_confidence: Optional[dict[str, float]] = None,
) -> DetectionReport:
    """
    Compute every metric field from a score table.

    Granularities whose OOD origin (or the ID origin) is absent stay None.
    """
    id_scores = score_table.select("id_test")
    fine = score_table.select("fine_ood")
    coarse = score_table.select("coarse_ood")
    report = DetectionReport(
        dataset_name=env.dataset_name if env is not None else "",
        split_index=env.split_index if env is not None else 0,
        scorer=score_table.scorer,
        objective=objective,
        temperature=score_table.temperature,
        n_id=int(id_scores.size),
        n_fine=int(fine.size),
        n_coarse=int(coarse.size),
        tpr_target=tpr_target,
        environment_seed=env.seed if env is not None else None,
        mean_confidence=dict(mean_confidence or {}),
    )
    if id_scores.size == 0:
        logger.warning("Score table has no ID scores; detection fields left empty")
    else:
        if fine.size:
            report.tnr95_fine = tnr_at_tpr(id_scores, fine, tpr_target)
            report.auroc_fine = auroc(id_scores, fine)
        if coarse.size:
            report.tnr95_coarse = tnr_at_tpr(id_scores, coarse, tpr_target)
            report.auroc_coarse = auroc(id_scores, coarse)
    if predictions is not None and labels is not None and len(labels) > 0:
        report.id_accuracy = accuracy(predictions, labels)
    missing = [name for name, n in (("fine_ood", fine.size), ("coarse_ood", coarse.size)) if n == 0]
    if missing:
        logger.warning(f"Partial report: no scores for {missing}")
    return report

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from src.data.examples import ExampleSet
from src.data.splits import EnvironmentData, EnvironmentSpec
from src.eval.metrics import DetectionReport, build_report
from src.models.networks import ModelContract, compute_logits
from src.scoring import BaseScorer, ScoreTable, create_scorer, score_msp

logger = logging.getLogger(__name__)


@dataclass
class EvaluationResult:
    report: DetectionReport
    score_table: ScoreTable


class DetectionEvaluationPipeline:
    """
    A pipeline for evaluating a trained classifier as an OOD detector.

    This pipeline:
    1. Computes logits on the ID test set and on the fine/coarse OOD sets
    2. Scores every example with a post-hoc scorer (higher = more ID)
    3. Builds a DetectionReport with TNR95/AUROC per granularity and ID accuracy
    4. Records mean MSP confidence per origin for density plots
    """

    def __init__(self, model: ModelContract, scorer: BaseScorer, objective: str = ""):
        """
        Initialize the evaluation pipeline.

        Args:
            model: A trained model implementing ModelContract
            scorer: The post-hoc scorer used for detection
            objective: Label of the training objective, carried into reports
        """
        self.model = model
        self.scorer = scorer
        self.objective = objective
        self.results: List[Dict[str, Any]] = []

    def evaluate_environment(
        self, env: EnvironmentSpec, data: EnvironmentData
    ) -> EvaluationResult:
        """
        Evaluate the model on one environment.

        Args:
            env: The environment (ID and held-out classes)
            data: ID test, fine-OOD and coarse-OOD collections; absent OOD
                collections produce a partial report

        Returns:
            EvaluationResult with the report and the per-example score table
        """
        self.model.eval()
        collections = {"id_test": data.id_test, "fine_ood": data.fine_ood, "coarse_ood": data.coarse_ood}
        parts: Dict[str, np.ndarray] = {}
        ids: Dict[str, List[str]] = {}
        mean_confidence: Dict[str, float] = {}
        predictions: Optional[np.ndarray] = None

        for origin, examples in tqdm(collections.items(), desc="Scoring origins"):
            if examples is None or len(examples) == 0:
                logger.warning(f"No {origin} data for {env.dataset_name} split {env.split_index}")
                continue
            logits = compute_logits(self.model, examples.inputs)
            parts[origin] = self.scorer.score(logits).double().numpy()
            ids[origin] = list(examples.ids)
            mean_confidence[origin] = float(score_msp(logits).mean())
            if origin == "id_test":
                predictions = logits.argmax(dim=-1).numpy()

        table = ScoreTable.from_parts(parts, self.scorer.name, self.scorer.temperature, ids)
        labels = data.id_test.labels.numpy() if data.id_test.labels is not None else None
        report = build_report(
            table,
            predictions,
            labels,
            env,
            objective=self.objective,
            mean_confidence=mean_confidence,
        )
        self.results.append(report.to_dict())
        return EvaluationResult(report=report, score_table=table)

    def log_summary(self, report: DetectionReport):
        """
        Log a summary of one detection report.
        """
        def _pct(value: Optional[float]) -> str:
            return "n/a" if value is None else f"{100 * value:.2f}"

        logger.info("=" * 60)
        logger.info("OOD DETECTION SUMMARY")
        logger.info("=" * 60)
        logger.info(f"Environment: {report.dataset_name} split {report.split_index}")
        logger.info(f"Objective: {report.objective or 'n/a'} | Scorer: {report.scorer} (T={report.temperature})")
        logger.info(f"ID accuracy: {_pct(report.id_accuracy)}")
        logger.info(f"TNR95 coarse/fine: {_pct(report.tnr95_coarse)} / {_pct(report.tnr95_fine)}")
        logger.info(f"AUROC coarse/fine: {_pct(report.auroc_coarse)} / {_pct(report.auroc_fine)}")
        logger.info("=" * 60)


def evaluate_environment(
    model: ModelContract,
    env: EnvironmentSpec,
    data: EnvironmentData,
    scorer: str,
    temperature: Optional[float] = None,
    objective: str = "",
) -> EvaluationResult:
    """Score one environment with the named scorer and build its report."""
    pipeline = DetectionEvaluationPipeline(model, create_scorer(scorer, temperature), objective)
    return pipeline.evaluate_environment(env, data)


def score_examples(model: ModelContract, examples: ExampleSet, scorer: BaseScorer) -> np.ndarray:
    return scorer.score(compute_logits(model, examples.inputs)).double().numpy()

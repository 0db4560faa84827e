"""
End-to-end experiments on the desk-scale toy benchmark.

One experiment builds a fine-grained environment, trains a standard model,
fine-tunes it with the configured objective and writes detection reports for
every configured scorer. All artifacts land under one output directory and
are listed in ``manifest.json``.
"""

import copy
import dataclasses
import logging
import os
from dataclasses import dataclass, field, fields
from importlib.metadata import PackageNotFoundError, version
from typing import Any, Mapping, Optional, Sequence

import numpy as np
import torch

from src.data.examples import DatasetBundle, ExampleSet
from src.data.splits import (
    DataPartition,
    EnvironmentData,
    EnvironmentSpec,
    OutlierPool,
    assemble_coarse_ood,
    assemble_fine_ood,
    filter_outlier_pool,
    load_environment,
    make_holdout_splits,
    partition_id_data,
    save_environment,
    split_outlier_validation,
)
from src.data.toy import make_outlier_corpus, make_toy_family
from src.eval.eval_pipeline.detection_eval import DetectionEvaluationPipeline, EvaluationResult
from src.eval.metrics import DetectionReport, write_reports_csv
from src.mixing import make_virtual_outlier, one_hot, sample_lambda
from src.models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.models.networks import ModelContract, build_model
from src.objectives.config import ObjectiveConfig
from src.scoring import SCORERS, create_scorer
from src.training.config import TrainConfig
from src.training.trainer import finetune, train_standard
from src.training.tuning import TuningResult, load_grid, tune_hyperparams, tune_temperature
from src.utils.common import config_hash, read_json, split_filename, write_json
from src.utils.errors import InvalidArgumentError, InvalidDataError
from src.viz.figures import FigureRecord, emit_scatter, write_figure_manifest
from src.viz.projector import fit_vis_layer, project

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_ROOT = "outputs"
OUTPUT_ROOT_ENV = "MIXOE_OUTPUT_ROOT"


def tool_version() -> str:
    try:
        return version("mixoe-bench")
    except PackageNotFoundError:
        return "0.1.0"


def _strict(cls, data: Mapping[str, Any], section: str) -> dict[str, Any]:
    known = {f.name for f in fields(cls)}
    unknown = [k for k in data if k not in known]
    if unknown:
        raise InvalidArgumentError(f"Unknown keys in '{section}': {unknown}")
    return dict(data)


@dataclass
class ToyDataConfig:
    """Synthetic benchmark: one ID family, coarse-OOD families and an outlier corpus."""

    dataset_name: str = "toy_fine"
    n_classes: int = 24
    n_train_per_class: int = 60
    n_test_per_class: int = 20
    image_size: int = 16
    channels: int = 1
    class_spread: float = 0.6
    noise: float = 0.5
    coarse_families: list[str] = field(default_factory=lambda: ["toy_coarse"])
    outlier_concepts: list[str] = field(
        default_factory=lambda: ["concept_a", "concept_b", "concept_c", "concept_d", "toy_fine", "toy_coarse"]
    )
    forbidden_concepts: list[str] = field(default_factory=list)
    n_outliers_per_concept: int = 200
    outlier_val_fraction: float = 0.1
    val_fraction: float = 0.1

    def forbidden(self) -> list[str]:
        """Configured forbidden concepts plus every evaluation family."""
        names = list(self.forbidden_concepts) + [self.dataset_name] + list(self.coarse_families)
        return list(dict.fromkeys(names))


@dataclass
class EnvironmentConfig:
    n_ood: int = 6
    n_splits: int = 1
    split_index: int = 1
    manifest: Optional[str] = None


@dataclass
class ModelConfig:
    name: str = "small_conv"
    kwargs: dict[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    data: ToyDataConfig = field(default_factory=ToyDataConfig)
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    standard: TrainConfig = field(default_factory=lambda: TrainConfig(phase="standard"))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(phase="finetune"))
    scorers: list[str] = field(default_factory=lambda: ["msp"])
    temperatures: dict[str, float] = field(default_factory=dict)
    tune_temperatures: bool = False
    tuning: Optional[dict[str, Any]] = None
    visualize: bool = False
    output_dir: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        unknown = [s for s in self.scorers if s not in SCORERS]
        if unknown or not self.scorers:
            raise InvalidArgumentError(f"scorers must be a nonempty subset of {SCORERS}, got {self.scorers}")
        if self.standard.phase != "standard" or self.finetune.phase != "finetune":
            raise InvalidArgumentError("'standard' and 'finetune' sections must use their own phase")

    @property
    def objective(self) -> ObjectiveConfig:
        return self.finetune.objective

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        """
        Parse a config document.

        The top-level `objective` section is the fine-tuning objective; the
        `seed` applies to data generation, splits, initialisation and both
        training phases.
        """
        values = _strict(cls, {k: v for k, v in data.items() if k != "objective"}, "experiment")
        seed = int(values.get("seed", 0))
        if "data" in values:
            values["data"] = ToyDataConfig(**_strict(ToyDataConfig, values["data"], "data"))
        if "environment" in values:
            values["environment"] = EnvironmentConfig(
                **_strict(EnvironmentConfig, values["environment"], "environment")
            )
        if "model" in values:
            values["model"] = ModelConfig(**_strict(ModelConfig, values["model"], "model"))
        standard = dict(values.get("standard", {}))
        standard.update(phase="standard", seed=seed)
        values["standard"] = TrainConfig.from_dict(standard)
        ft = dict(values.get("finetune", {}))
        if "objective" in ft:
            raise InvalidArgumentError("Put the fine-tuning objective in the top-level 'objective' section")
        ft.update(phase="finetune", seed=seed, objective=data.get("objective", {"kind": "standard"}))
        values["finetune"] = TrainConfig.from_dict(ft)
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        standard = self.standard.to_dict()
        ft = self.finetune.to_dict()
        objective = ft.pop("objective")
        for section in (standard, ft):
            section.pop("phase")
            section.pop("seed")
        standard.pop("objective")
        return {
            "data": dataclasses.asdict(self.data),
            "environment": dataclasses.asdict(self.environment),
            "model": dataclasses.asdict(self.model),
            "standard": standard,
            "finetune": ft,
            "objective": objective,
            "scorers": list(self.scorers),
            "temperatures": dict(self.temperatures),
            "tune_temperatures": self.tune_temperatures,
            "tuning": self.tuning,
            "visualize": self.visualize,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    def hash(self) -> str:
        return config_hash(self.to_dict())


def apply_overrides(data: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """
    Apply dotted-key overrides ("finetune.epochs": 2) to a raw config document.

    Changing `objective.kind` drops the other objective keys of the file, so
    that kind-specific fields of the old objective do not leak into the new one.
    """
    result = copy.deepcopy(dict(data))
    if "objective.kind" in overrides:
        result["objective"] = {"kind": overrides["objective.kind"]}
    for key, value in overrides.items():
        if value is None:
            continue
        target = result
        *parents, leaf = key.split(".")
        for parent in parents:
            target = target.setdefault(parent, {})
            if not isinstance(target, dict):
                raise InvalidArgumentError(f"Cannot override '{key}': '{parent}' is not a section")
        target[leaf] = value
    return result


def load_experiment_config(
    path: Optional[str], overrides: Optional[Mapping[str, Any]] = None
) -> ExperimentConfig:
    data = read_json(path) if path else {}
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"Experiment config {path} must be a JSON object")
    return ExperimentConfig.from_dict(apply_overrides(data, overrides or {}))


def resolve_output_dir(config: ExperimentConfig, output_dir: Optional[str] = None) -> str:
    """Explicit argument, then the config's output_dir, then $MIXOE_OUTPUT_ROOT/<hash prefix>."""
    if output_dir:
        return output_dir
    if config.output_dir:
        return config.output_dir
    root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
    return os.path.join(root, f"{config.data.dataset_name}-{config.hash()[:12]}")


@dataclass
class ExperimentManifest:
    config_path: Optional[str]
    config: dict[str, Any]
    environment: dict[str, Any]
    objective: str
    seed: int
    checkpoints: dict[str, str] = field(default_factory=dict)
    reports: list[str] = field(default_factory=list)
    score_tables: list[str] = field(default_factory=list)
    figures: list[str] = field(default_factory=list)
    overrides: dict[str, Any] = field(default_factory=dict)
    tool_version: str = field(default_factory=tool_version)
    config_hash: str = ""

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def save(self, path: str) -> str:
        write_json(self.to_dict(), path)
        return path

    @classmethod
    def load(cls, path: str) -> "ExperimentManifest":
        return cls(**read_json(path))


@dataclass
class PreparedEnvironment:
    """Everything one environment needs, built deterministically from the config."""

    dataset: DatasetBundle
    env: EnvironmentSpec
    partition: DataPartition
    eval_data: EnvironmentData
    outlier_train: OutlierPool
    outlier_validation: OutlierPool

    def guarded(self) -> list[ExampleSet]:
        """Collections that no training phase may read."""
        sets = [self.partition.test, self.outlier_validation.examples]
        sets.extend(s for s in (self.eval_data.fine_ood, self.eval_data.coarse_ood) if s is not None)
        return sets

    def reset_audit(self) -> None:
        for examples in self.guarded():
            examples.reset_reads()

    def check_audit(self, phase: str) -> None:
        touched = [f"{s.name}={s.reads}" for s in self.guarded() if s.reads]
        if touched:
            raise RuntimeError(f"{phase} read held-out collections: {', '.join(touched)}")


def _family(config: ExperimentConfig, name: str) -> DatasetBundle:
    d = config.data
    return make_toy_family(
        name,
        d.n_classes,
        n_train_per_class=d.n_train_per_class,
        n_test_per_class=d.n_test_per_class,
        image_size=d.image_size,
        channels=d.channels,
        class_spread=d.class_spread,
        noise=d.noise,
        seed=config.seed,
    )


def prepare_environment(config: ExperimentConfig) -> PreparedEnvironment:
    d = config.data
    dataset = _family(config, d.dataset_name)
    if config.environment.manifest:
        env = load_environment(config.environment.manifest, dataset.classes)
        if env.dataset_name != d.dataset_name:
            raise InvalidDataError(
                f"Split manifest is for '{env.dataset_name}', config uses '{d.dataset_name}'"
            )
    else:
        n_splits = max(config.environment.n_splits, config.environment.split_index)
        env = make_holdout_splits(
            dataset.classes,
            config.environment.n_ood,
            n_splits,
            config.seed,
            dataset_name=d.dataset_name,
            coarse_ood_sources=d.coarse_families,
        )[config.environment.split_index - 1]

    partition = partition_id_data(dataset, env, d.val_fraction, config.seed)
    coarse = {name: _family(config, name) for name in env.coarse_ood_sources}
    eval_data = EnvironmentData(
        id_test=partition.test,
        fine_ood=assemble_fine_ood(env, dataset),
        coarse_ood=assemble_coarse_ood(env, coarse) if coarse else None,
    )
    corpus = make_outlier_corpus(
        d.outlier_concepts,
        d.n_outliers_per_concept,
        image_size=d.image_size,
        channels=d.channels,
        class_spread=d.class_spread,
        noise=d.noise,
        seed=config.seed,
    )
    pool = filter_outlier_pool(corpus, d.forbidden())
    outlier_train, outlier_validation = split_outlier_validation(pool, d.outlier_val_fraction, config.seed)
    return PreparedEnvironment(dataset, env, partition, eval_data, outlier_train, outlier_validation)


def phase_hash(config: ExperimentConfig, env: EnvironmentSpec, train_config: TrainConfig) -> str:
    """Hash binding a checkpoint to its data, environment, model and training config."""
    return config_hash(
        {
            "data": dataclasses.asdict(config.data),
            "environment": env.to_dict(),
            "model": dataclasses.asdict(config.model),
            "train": train_config.to_dict(),
        }
    )


def standard_phase_hash(config: ExperimentConfig, env: EnvironmentSpec) -> str:
    return phase_hash(config, env, config.standard)


def finetune_phase_hash(config: ExperimentConfig, env: EnvironmentSpec) -> str:
    return config_hash(
        {"base": standard_phase_hash(config, env), "finetune": phase_hash(config, env, config.finetune)}
    )


def new_model(config: ExperimentConfig, prepared: PreparedEnvironment) -> ModelContract:
    return build_model(
        config.model.name,
        prepared.partition.train.input_shape,
        prepared.partition.num_classes,
        seed=config.seed,
        **config.model.kwargs,
    )


def checkpoint_path(output_dir: str, label: str) -> str:
    return os.path.join(output_dir, "checkpoints", f"{label}.pt")


def run_standard_phase(
    config: ExperimentConfig, prepared: PreparedEnvironment, output_dir: str
) -> tuple[ModelContract, Checkpoint, str]:
    model = new_model(config, prepared)
    prepared.reset_audit()
    checkpoint = train_standard(model, prepared.partition, config.standard)
    prepared.check_audit("standard training")
    checkpoint.config_hash = standard_phase_hash(config, prepared.env)
    path = save_checkpoint(checkpoint, checkpoint_path(output_dir, "standard"))
    return model, checkpoint, path


def load_standard_checkpoint(
    config: ExperimentConfig, prepared: PreparedEnvironment, output_dir: str
) -> Checkpoint:
    path = checkpoint_path(output_dir, "standard")
    if not os.path.exists(path):
        raise InvalidDataError(f"No standard checkpoint at {path}; run 'train' first")
    checkpoint = load_checkpoint(path, standard_phase_hash(config, prepared.env))
    if checkpoint.phase != "standard" or not checkpoint.completed:
        raise InvalidDataError(f"{path} is not a completed standard checkpoint")
    return checkpoint


def run_finetune_phase(
    config: ExperimentConfig,
    prepared: PreparedEnvironment,
    base: Checkpoint,
    output_dir: str,
) -> tuple[ModelContract, Checkpoint, str]:
    model = new_model(config, prepared)
    prepared.reset_audit()
    checkpoint = finetune(model, prepared.partition, prepared.outlier_train, config.finetune, base)
    prepared.check_audit("fine-tuning")
    checkpoint.config_hash = finetune_phase_hash(config, prepared.env)
    path = save_checkpoint(checkpoint, checkpoint_path(output_dir, config.objective.label))
    return model, checkpoint, path


def run_tuning(
    config: ExperimentConfig,
    prepared: PreparedEnvironment,
    base: Checkpoint,
    grid: Sequence[ObjectiveConfig],
    output_dir: str,
    max_drop: float = 1.0,
) -> TuningResult:
    prepared.reset_audit()
    result = tune_hyperparams(
        grid,
        lambda: new_model(config, prepared),
        prepared.partition,
        {"train": prepared.outlier_train, "validation": prepared.outlier_validation},
        prepared.env.split_index,
        base,
        config.finetune,
        max_drop=max_drop,
    )
    write_json(result.to_dict(), os.path.join(output_dir, "tuning.json"))
    return result


def resolve_temperature(
    config: ExperimentConfig, prepared: PreparedEnvironment, model: ModelContract, scorer: str
) -> Optional[float]:
    if scorer in config.temperatures:
        return float(config.temperatures[scorer])
    if config.tune_temperatures and scorer != "msp":
        tau, _ = tune_temperature(
            scorer, model, prepared.partition.validation, prepared.outlier_validation.examples
        )
        return tau
    return None


def report_stem(env: EnvironmentSpec, objective: str, scorer: str) -> str:
    return f"{split_filename(env.dataset_name, env.split_index)[:-5]}.{objective}.{scorer}"


def evaluate_model(
    config: ExperimentConfig,
    prepared: PreparedEnvironment,
    model: ModelContract,
    objective: str,
    scorer: str,
    output_dir: str,
) -> tuple[EvaluationResult, str, str]:
    """Evaluate one model with one scorer and write the report and score table."""
    temperature = resolve_temperature(config, prepared, model, scorer)
    pipeline = DetectionEvaluationPipeline(model, create_scorer(scorer, temperature), objective)
    result = pipeline.evaluate_environment(prepared.env, prepared.eval_data)
    pipeline.log_summary(result.report)
    stem = os.path.join(output_dir, "reports", report_stem(prepared.env, objective, scorer))
    report_path = result.report.save(f"{stem}.report.json")
    table_path = result.score_table.save(f"{stem}.scores.tsv")
    return result, report_path, table_path


def emit_feature_scatter(
    config: ExperimentConfig,
    prepared: PreparedEnvironment,
    model: ModelContract,
    out_path: str,
    max_points: int = 400,
) -> FigureRecord:
    """
    Fit the visualization layer on ID training data, then plot ID, OOD,
    outlier and mixed samples with confidence shading.
    """
    projector = fit_vis_layer(model, prepared.partition.train, seed=config.seed)
    rng = np.random.default_rng([config.seed, 2])

    def _take(examples: Optional[ExampleSet]) -> Optional[ExampleSet]:
        if examples is None or len(examples) == 0:
            return None
        keep = np.sort(rng.choice(len(examples), size=min(max_points, len(examples)), replace=False))
        return examples.subset(keep.tolist())

    groups = {
        "id": _take(prepared.partition.test),
        "coarse_ood": _take(prepared.eval_data.coarse_ood),
        "fine_ood": _take(prepared.eval_data.fine_ood),
        "outlier": _take(prepared.outlier_train.examples),
    }
    points, shading = {}, {}
    for tag, examples in groups.items():
        if examples is not None:
            points[tag], shading[tag] = project(projector, model, examples, confidence=True)

    if groups["id"] is not None and groups["outlier"] is not None:
        n = min(len(groups["id"]), len(groups["outlier"]))
        x_in, y_in = groups["id"].batch(list(range(n)))
        x_out, _ = groups["outlier"].batch(list(range(n)))
        alpha = config.objective.alpha or 1.0
        mode = config.objective.mode or "linear"
        lam = sample_lambda(alpha, rng).lam
        mixed = make_virtual_outlier(x_in, one_hot(y_in, model.num_classes), x_out, lam, mode, rng, alpha)
        points["mixed"], shading["mixed"] = project(projector, model, mixed.input, confidence=True)

    record = emit_scatter(points, out_path, shading)
    record.parameters["projector"] = projector.metadata
    return record


def run_experiment(
    config: ExperimentConfig,
    output_dir: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    config_path: Optional[str] = None,
    prepared: Optional[PreparedEnvironment] = None,
) -> ExperimentManifest:
    """
    Run standard training, optional tuning, fine-tuning and evaluation.

    Args:
        config (ExperimentConfig): Resolved experiment config (overrides applied).
        output_dir (Optional[str]): Artifact directory; see `resolve_output_dir`.
        overrides (Optional[Mapping[str, Any]]): Flag overrides, recorded only.
        config_path (Optional[str]): Source file of the config, recorded only.
        prepared (Optional[PreparedEnvironment]): An environment already built
            from `config`; built here when None.

    Returns:
        ExperimentManifest: Every artifact path, the environment and the config hash.
    """
    output_dir = resolve_output_dir(config, output_dir)
    os.makedirs(output_dir, exist_ok=True)
    torch.manual_seed(config.seed)
    if prepared is None:
        prepared = prepare_environment(config)
    split_path = save_environment(prepared.env, os.path.join(output_dir, "splits"), force=True)
    manifest = ExperimentManifest(
        config_path=config_path,
        config=config.to_dict(),
        environment=prepared.env.to_dict(),
        objective=config.objective.kind,
        seed=config.seed,
        overrides=dict(overrides or {}),
        config_hash=config.hash(),
    )
    manifest.checkpoints["split"] = split_path

    logger.info(f"[standard] training on {prepared.env.dataset_name} split {prepared.env.split_index}")
    standard_model, standard_ckpt, path = run_standard_phase(config, prepared, output_dir)
    manifest.checkpoints["standard"] = path

    if config.tuning:
        grid = load_grid(config.tuning.get("grid"))
        result = run_tuning(config, prepared, standard_ckpt, grid, output_dir, config.tuning.get("max_drop", 1.0))
        config = dataclasses.replace(
            config, finetune=dataclasses.replace(config.finetune, objective=result.best, outlier_batch_size=None)
        )
        manifest.objective = config.objective.kind
        manifest.checkpoints["tuning"] = os.path.join(output_dir, "tuning.json")

    models = {"standard": standard_model}
    if config.objective.kind != "standard" or config.tuning:
        logger.info(f"[finetune] objective {config.objective.label}")
        tuned_model, _, path = run_finetune_phase(config, prepared, standard_ckpt, output_dir)
        manifest.checkpoints[config.objective.label] = path
        models[config.objective.label] = tuned_model
    elif config.finetune.epochs:
        tuned_model, _, path = run_finetune_phase(config, prepared, standard_ckpt, output_dir)
        manifest.checkpoints["standard_continued"] = path
        models["standard_continued"] = tuned_model

    reports: list[DetectionReport] = []
    for label, model in models.items():
        for scorer in config.scorers:
            logger.info(f"[evaluate] {label} with {scorer}")
            result, report_path, table_path = evaluate_model(config, prepared, model, label, scorer, output_dir)
            reports.append(result.report)
            manifest.reports.append(report_path)
            manifest.score_tables.append(table_path)
    manifest.reports.append(write_reports_csv(reports, os.path.join(output_dir, "reports.csv")))

    if config.visualize:
        records = [
            emit_feature_scatter(config, prepared, model, os.path.join(output_dir, "figures", f"scatter_{label}.svg"))
            for label, model in models.items()
        ]
        manifest.figures.extend(r.path for r in records)
        manifest.figures.append(write_figure_manifest(records, os.path.join(output_dir, "figures", "figures.json")))

    manifest.save(os.path.join(output_dir, "manifest.json"))
    logger.info(f"Experiment finished; manifest at {os.path.join(output_dir, 'manifest.json')}")
    return manifest


DIRECTIONAL_OBJECTIVES = (
    ObjectiveConfig.for_kind("oe"),
    ObjectiveConfig.for_kind("mixoe", mode="linear"),
    ObjectiveConfig.for_kind("mixoe", mode="cut"),
    ObjectiveConfig.for_kind("mix_plus_oe"),
)


def run_directional_study(
    config: ExperimentConfig,
    seeds: Sequence[int],
    output_dir: str,
    objectives: Sequence[ObjectiveConfig] = DIRECTIONAL_OBJECTIVES,
) -> dict[str, dict[str, float]]:
    """
    Compare the standard model with fine-tuned variants over several seeds.

    Each seed trains one standard model and fine-tunes every objective from
    it; all models are evaluated with MSP.

    Returns:
        dict[str, dict[str, float]]: Seed-averaged auroc/tnr95 per granularity,
        id_accuracy and mean fine-OOD confidence, keyed by method label.
    """
    collected: dict[str, list[DetectionReport]] = {}
    for seed in seeds:
        seeded = dataclasses.replace(
            config,
            seed=seed,
            standard=dataclasses.replace(config.standard, seed=seed),
            finetune=dataclasses.replace(config.finetune, seed=seed),
        )
        seed_dir = os.path.join(output_dir, f"seed{seed}")
        prepared = prepare_environment(seeded)
        standard_model, standard_ckpt, _ = run_standard_phase(seeded, prepared, seed_dir)
        models = {"standard": standard_model}
        for objective in objectives:
            variant = dataclasses.replace(
                seeded, finetune=dataclasses.replace(seeded.finetune, objective=objective, outlier_batch_size=None)
            )
            models[objective.label], _, _ = run_finetune_phase(variant, prepared, standard_ckpt, seed_dir)
        for label, model in models.items():
            result, _, _ = evaluate_model(seeded, prepared, model, label, "msp", seed_dir)
            collected.setdefault(label, []).append(result.report)

    def _mean(values: list[Optional[float]]) -> float:
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present else float("nan")

    summary = {}
    for label, reports in collected.items():
        summary[label] = {
            "auroc_fine": _mean([r.auroc_fine for r in reports]),
            "auroc_coarse": _mean([r.auroc_coarse for r in reports]),
            "tnr95_fine": _mean([r.tnr95_fine for r in reports]),
            "tnr95_coarse": _mean([r.tnr95_coarse for r in reports]),
            "id_accuracy": _mean([r.id_accuracy for r in reports]),
            "fine_confidence": _mean([r.mean_confidence.get("fine_ood") for r in reports]),
        }
        logger.info(f"{label}: {summary[label]}")
    write_json(summary, os.path.join(output_dir, "directional_summary.json"))
    return summary


__all__ = [
    "ExperimentConfig",
    "ExperimentManifest",
    "apply_overrides",
    "load_experiment_config",
    "run_directional_study",
    "run_experiment",
]

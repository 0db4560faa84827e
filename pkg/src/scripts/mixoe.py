#!/usr/bin/env python3
"""
Command-line driver for fine-grained OOD detection experiments.

Commands: make-splits, train, finetune, tune, evaluate, run, report.
Exit codes: 0 ok, 2 invalid arguments, 3 data error, 4 training divergence,
1 any other failure.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Optional

from dotenv import load_dotenv

from src.data.splits import make_holdout_splits, save_environment
from src.data.toy import toy_class_names
from src.eval.report import aggregate_reports, write_table
from src.models.checkpoint import load_checkpoint
from src.objectives.config import OBJECTIVE_KINDS
from src.pipeline.experiment import (
    checkpoint_path,
    evaluate_model,
    finetune_phase_hash,
    load_experiment_config,
    load_standard_checkpoint,
    new_model,
    prepare_environment,
    resolve_output_dir,
    run_experiment,
    run_finetune_phase,
    run_standard_phase,
    run_tuning,
    standard_phase_hash,
)
from src.scoring import SCORERS
from src.scoring.table import ScoreTable
from src.training.tuning import load_grid
from src.utils.common import extract_split_from_filename, read_json, split_filename
from src.utils.errors import (
    ConfigHashMismatchError,
    InvalidArgumentError,
    InvalidDataError,
    InvalidInputError,
    TrainingDivergenceError,
    UnsupportedOperationError,
)
from src.utils.eval import load_reports_by_dataset
from src.viz.figures import emit_confidence_density, emit_tnr_bars, write_figure_manifest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> logging.Logger:
    """
    Set up logging for the `src` package.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file that also receives every record (append mode)

    Returns:
        Configured logger
    """
    logger = logging.getLogger("src")
    logger.setLevel(getattr(logging, level.upper()))
    formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    if not any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler) for h in logger.handlers):
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if log_file:
        path = os.path.abspath(log_file)
        if not any(isinstance(h, logging.FileHandler) and h.baseFilename == path for h in logger.handlers):
            os.makedirs(os.path.dirname(path), exist_ok=True)
            file_handler = logging.FileHandler(path, mode="a", encoding="utf-8")
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    for handler in logger.handlers:
        handler.setLevel(getattr(logging, level.upper()))
    return logger


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Flags that override config keys, by dotted key; unset flags are left out."""
    mapping = {
        "seed": "seed",
        "objective": "objective.kind",
        "beta": "objective.beta",
        "alpha": "objective.alpha",
        "mode": "objective.mode",
        "standard_epochs": "standard.epochs",
        "finetune_epochs": "finetune.epochs",
    }
    return {key: getattr(args, attr) for attr, key in mapping.items() if getattr(args, attr, None) is not None}


def _load(args: argparse.Namespace):
    overrides = _overrides(args)
    config = load_experiment_config(args.config, overrides)
    output_dir = resolve_output_dir(config, args.output_dir)
    return config, output_dir, overrides


def _start_run_log(args: argparse.Namespace, output_dir: str, overrides: dict[str, Any]) -> None:
    """Attach the run.log handler; called once the inputs of a command are validated."""
    setup_logging(args.log_level, os.path.join(output_dir, "run.log"))
    if overrides:
        logger.info(f"Config overrides: {overrides}")


def cmd_make_splits(args: argparse.Namespace) -> list[str]:
    if args.classes_file:
        with open(args.classes_file, "r", encoding="utf-8") as f:
            text = f.read()
        classes = json.loads(text) if text.lstrip().startswith("[") else [line.strip() for line in text.splitlines() if line.strip()]
    elif args.n_classes:
        classes = toy_class_names(args.dataset, args.n_classes)
    else:
        raise InvalidArgumentError("Give --n-classes or --classes-file")

    specs = make_holdout_splits(
        classes, args.n_ood, args.n_splits, args.seed, dataset_name=args.dataset, coarse_ood_sources=args.coarse_sources
    )
    existing = [
        p for p in (os.path.join(args.out, split_filename(s.dataset_name, s.split_index)) for s in specs) if os.path.exists(p)
    ]
    if existing and not args.force:
        raise InvalidArgumentError(f"Split manifests already exist: {existing} (use --force)")
    paths = [save_environment(spec, args.out, force=args.force) for spec in specs]
    for path in paths:
        logger.info(f"Wrote {path}")
    return paths


def cmd_train(args: argparse.Namespace) -> str:
    config, output_dir, overrides = _load(args)
    prepared = prepare_environment(config)
    _start_run_log(args, output_dir, overrides)
    _, _, path = run_standard_phase(config, prepared, output_dir)
    return path


def cmd_finetune(args: argparse.Namespace) -> str:
    config, output_dir, overrides = _load(args)
    prepared = prepare_environment(config)
    _start_run_log(args, output_dir, overrides)
    base = load_standard_checkpoint(config, prepared, output_dir)
    _, _, path = run_finetune_phase(config, prepared, base, output_dir)
    return path


def cmd_tune(args: argparse.Namespace) -> str:
    config, output_dir, overrides = _load(args)
    grid = load_grid(read_json(args.grid))
    prepared = prepare_environment(config)
    _start_run_log(args, output_dir, overrides)
    base = load_standard_checkpoint(config, prepared, output_dir)
    result = run_tuning(config, prepared, base, grid, output_dir, args.max_drop)
    logger.info(f"Chosen objective: {result.best.to_dict()} (flagged={result.flagged})")
    return os.path.join(output_dir, "tuning.json")


def cmd_evaluate(args: argparse.Namespace) -> str:
    config, output_dir, overrides = _load(args)
    if args.temperature is not None:
        config.temperatures[args.scorer] = args.temperature
    prepared = prepare_environment(config)
    _start_run_log(args, output_dir, overrides)
    label = args.checkpoint or config.objective.label
    if label == "standard":
        expected = standard_phase_hash(config, prepared.env)
    else:
        expected = finetune_phase_hash(config, prepared.env)
    path = checkpoint_path(output_dir, label)
    if not os.path.exists(path):
        raise InvalidDataError(f"No checkpoint at {path}")
    checkpoint = load_checkpoint(path, expected)
    model = new_model(config, prepared)
    model.set_parameters(checkpoint.state_dict)
    model.eval()
    _, report_path, _ = evaluate_model(config, prepared, model, label, args.scorer, output_dir)
    return report_path


def cmd_run(args: argparse.Namespace) -> str:
    config, output_dir, overrides = _load(args)
    prepared = prepare_environment(config)
    _start_run_log(args, output_dir, overrides)
    run_experiment(config, output_dir, overrides, config_path=args.config, prepared=prepared)
    return os.path.join(output_dir, "manifest.json")


def _score_tables(report_dir: str, dataset_name: str) -> dict[str, ScoreTable]:
    """MSP score tables of one dataset keyed by objective, lowest split first."""
    found: dict[str, tuple[int, str]] = {}
    for root, _, files in os.walk(report_dir):
        for name in files:
            if not name.endswith(".msp.scores.tsv"):
                continue
            stem, objective = name[: -len(".msp.scores.tsv")].rsplit(".", 1)
            meta = extract_split_from_filename(f"{stem}.json")
            if meta["dataset_name"] != dataset_name:
                continue
            if objective not in found or meta["split_index"] < found[objective][0]:
                found[objective] = (meta["split_index"], os.path.join(root, name))
    return {objective: ScoreTable.load(path) for objective, (_, path) in sorted(found.items())}


def cmd_report(args: argparse.Namespace) -> list[str]:
    out_dir = args.out or args.report_dir
    setup_logging(args.log_level, os.path.join(out_dir, "run.log"))
    grouped = load_reports_by_dataset(args.report_dir)
    if not grouped:
        raise InvalidDataError(f"No detection reports under {args.report_dir}")

    written, records = [], []
    for dataset_name, reports in grouped.items():
        for metric in ("tnr95", "auroc"):
            table = aggregate_reports(reports, metric)
            for ext in ("csv", "md"):
                written.append(write_table(table, os.path.join(out_dir, f"{dataset_name}.{metric}.{ext}")))
        records.append(emit_tnr_bars(reports, os.path.join(out_dir, "figures", f"{dataset_name}.tnr_bars.svg")))
        tables = _score_tables(args.report_dir, dataset_name)
        if tables:
            records.append(
                emit_confidence_density(tables, os.path.join(out_dir, "figures", f"{dataset_name}.confidence.svg"))
            )
    written.extend(r.path for r in records)
    written.append(write_figure_manifest(records, os.path.join(out_dir, "figures", "figures.json")))
    return written


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="Seed for data, splits, initialisation and training")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Logging level (default: INFO)",
    )


def _add_experiment(parser: argparse.ArgumentParser) -> None:
    _add_common(parser)
    parser.add_argument("--config", help="Experiment config (JSON); defaults apply when omitted")
    parser.add_argument("--output-dir", help="Artifact directory (default: config or $MIXOE_OUTPUT_ROOT)")


def _add_objective(parser: argparse.ArgumentParser, required: bool = False) -> None:
    parser.add_argument("--objective", choices=OBJECTIVE_KINDS, required=required, help="Fine-tuning objective")
    parser.add_argument("--beta", type=float, help="Regularization weight")
    parser.add_argument("--alpha", type=float, help="Beta(alpha, alpha) mixing parameter")
    parser.add_argument("--mode", choices=["linear", "cut"], help="Mixing operation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Fine-grained OOD detection with mixture outlier exposure")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-splits", help="Write holdout-class split manifests")
    _add_common(p)
    p.add_argument("--dataset", default="toy_fine", help="Dataset name")
    p.add_argument("--n-classes", type=int, help="Number of classes of a toy dataset")
    p.add_argument("--classes-file", help="Class identifiers, one per line or a JSON list")
    p.add_argument("--n-ood", type=int, required=True, help="Classes held out per split")
    p.add_argument("--n-splits", type=int, default=3, help="Number of splits")
    p.add_argument("--coarse-sources", nargs="*", default=[], help="Coarse-OOD dataset names")
    p.add_argument("--out", default="splits", help="Output directory")
    p.add_argument("--force", action="store_true", help="Overwrite existing manifests")
    p.set_defaults(func=cmd_make_splits)

    p = sub.add_parser("train", help="Train the standard model")
    _add_experiment(p)
    p.add_argument("--epochs", dest="standard_epochs", type=int, help="Standard training epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="Fine-tune the standard model")
    _add_experiment(p)
    _add_objective(p, required=True)
    p.add_argument("--epochs", dest="finetune_epochs", type=int, help="Fine-tuning epochs")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("tune", help="Select objective hyperparameters on one split")
    _add_experiment(p)
    p.add_argument("--grid", required=True, help="Grid file (JSON)")
    p.add_argument("--max-drop", type=float, default=1.0, help="Allowed ID accuracy drop in points")
    p.add_argument("--epochs", dest="finetune_epochs", type=int, help="Fine-tuning epochs per grid point")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("evaluate", help="Score one checkpoint on its environment")
    _add_experiment(p)
    _add_objective(p)
    p.add_argument("--scorer", choices=SCORERS, required=True, help="Post-hoc scorer")
    p.add_argument("--temperature", type=float, help="Scorer temperature")
    p.add_argument("--checkpoint", help="Checkpoint label (default: the objective's label)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="Train, fine-tune and evaluate in one go")
    _add_experiment(p)
    _add_objective(p)
    p.add_argument("--standard-epochs", type=int, help="Standard training epochs")
    p.add_argument("--finetune-epochs", type=int, help="Fine-tuning epochs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="Aggregate reports into tables and figures")
    _add_common(p)
    p.add_argument("--report-dir", required=True, help="Directory holding *.report.json files")
    p.add_argument("--out", help="Output directory (default: the report directory)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    if args.command == "make-splits" and args.seed is None:
        args.seed = 0

    try:
        result = args.func(args)
        logger.info(f"{args.command} completed: {result}")
        return EXIT_OK
    except (InvalidArgumentError, UnsupportedOperationError) as e:
        logger.error(f"[{args.command}] invalid argument: {e}")
        return EXIT_USAGE
    except (InvalidDataError, InvalidInputError, ConfigHashMismatchError, FileNotFoundError, json.JSONDecodeError) as e:
        logger.error(f"[{args.command}] data error: {e}")
        return EXIT_DATA
    except TrainingDivergenceError as e:
        logger.error(f"[{args.command}] training diverged: {e}")
        return EXIT_DIVERGENCE
    except Exception as e:
        logger.error(f"[{args.command}] failed: {str(e)}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

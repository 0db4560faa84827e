"""
Per-split detection reports aggregated into method-by-split tables.

Each cell pairs the coarse-grained and fine-grained value of one metric as
"coarse / fine"; the last column is the average difference against the
standard-model MSP baseline over splits.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.eval.metrics import DetectionReport
from src.utils.errors import InvalidArgumentError, InvalidDataError

logger = logging.getLogger(__name__)

BASELINE_METHOD = "MSP"
METRICS = ("tnr95", "auroc")
_SCORER_NAMES = {"msp": "MSP", "odin": "ODIN", "energy": "Energy"}

Pair = tuple[Optional[float], Optional[float]]


def method_label(report: DetectionReport) -> str:
    """Post-hoc scorers on the standard model are named by scorer, trained methods by objective."""
    scorer = _SCORER_NAMES.get(report.scorer, report.scorer)
    if report.objective in ("", "standard"):
        return scorer
    if report.scorer == "msp":
        return report.objective
    return f"{report.objective} ({scorer})"


@dataclass
class ReportRow:
    method: str
    cells: list[Pair]
    avg_diff: Pair = (None, None)
    diff_std: Pair = (None, None)


@dataclass
class ReportTable:
    dataset_name: str
    metric: str
    split_indices: list[int]
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def columns(self) -> list[str]:
        return ["Method"] + [f"Split {i}" for i in range(1, len(self.split_indices) + 1)] + ["Avg. diff."]

    def row(self, method: str) -> ReportRow:
        for row in self.rows:
            if row.method == method:
                return row
        raise KeyError(method)


def _value(x) -> Optional[float]:
    return None if pd.isna(x) else float(x)


def _report_frame(reports: Sequence[DetectionReport], metric: str) -> pd.DataFrame:
    frame = pd.DataFrame(
        [
            {
                "method": method_label(r),
                "split": r.split_index,
                "coarse": getattr(r, f"{metric}_coarse"),
                "fine": getattr(r, f"{metric}_fine"),
            }
            for r in reports
        ]
    )
    frame[["coarse", "fine"]] = frame[["coarse", "fine"]].astype(np.float64)
    return frame


def _diff_stats(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation over splits of each method's difference to the baseline."""
    baseline = frame[frame["method"] == BASELINE_METHOD].drop(columns="method")
    merged = frame.merge(baseline, on="split", suffixes=("", "_base"))
    merged["coarse"] = merged["coarse"] - merged["coarse_base"]
    merged["fine"] = merged["fine"] - merged["fine_base"]
    return merged.groupby("method")[["coarse", "fine"]].agg(["mean", "std"])


def aggregate_reports(reports: Sequence[DetectionReport], metric: str = "tnr95") -> ReportTable:
    """
    Build one table from reports of a single dataset.

    Args:
        reports (Sequence[DetectionReport]): Reports of every method and split.
        metric (str): "tnr95" or "auroc".

    Returns:
        ReportTable: Rows in first-seen method order with the MSP baseline first.
    """
    if not reports:
        raise InvalidArgumentError("No detection reports to aggregate")
    if metric not in METRICS:
        raise InvalidArgumentError(f"metric must be one of {METRICS}, got '{metric}'")
    datasets = sorted({r.dataset_name for r in reports})
    if len(datasets) > 1:
        raise InvalidDataError(f"Reports from different environments cannot be aggregated: {datasets}")

    frame = _report_frame(reports, metric)
    duplicated = frame[frame.duplicated(["method", "split"])]
    if not duplicated.empty:
        first = duplicated.iloc[0]
        raise InvalidDataError(f"Duplicate report for {first['method']} on split {first['split']}")

    split_indices = sorted(frame["split"].unique().tolist())
    methods = list(dict.fromkeys(frame["method"]))
    if BASELINE_METHOD in methods:
        methods.remove(BASELINE_METHOD)
        methods.insert(0, BASELINE_METHOD)
        stats = _diff_stats(frame)
    else:
        logger.warning("No standard-model MSP reports; average differences left empty")
        stats = None

    grid = frame.pivot(index="method", columns="split", values=["coarse", "fine"])
    table = ReportTable(dataset_name=datasets[0], metric=metric, split_indices=split_indices)
    for method in methods:
        cells = [
            (_value(grid.loc[method, ("coarse", i)]), _value(grid.loc[method, ("fine", i)]))
            for i in split_indices
        ]
        row = ReportRow(method=method, cells=cells)
        if stats is not None and method in stats.index:
            row.avg_diff = (
                _value(stats.loc[method, ("coarse", "mean")]),
                _value(stats.loc[method, ("fine", "mean")]),
            )
            row.diff_std = (
                _value(stats.loc[method, ("coarse", "std")]),
                _value(stats.loc[method, ("fine", "std")]),
            )
        table.rows.append(row)
    return table


def format_pair(pair: Pair, signed: bool = False) -> str:
    def _fmt(value: Optional[float]) -> str:
        if value is None:
            return "-"
        return f"{100 * value:+.1f}" if signed else f"{100 * value:.1f}"

    return f"{_fmt(pair[0])} / {_fmt(pair[1])}"


def table_rows(table: ReportTable) -> list[list[str]]:
    return [
        [row.method]
        + [format_pair(cell) for cell in row.cells]
        + [format_pair(row.avg_diff, signed=True)]
        for row in table.rows
    ]


def write_table(table: ReportTable, path: str) -> str:
    """
    Write the table as CSV or Markdown, chosen by the file extension.
    """
    frame = pd.DataFrame(table_rows(table), columns=table.columns)
    if path.endswith(".csv"):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        frame.to_csv(path, index=False)
    elif path.endswith(".md"):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        title = f"**{table.dataset_name}** {table.metric.upper()} (coarse / fine)"
        body = frame.to_markdown(index=False, tablefmt="github", disable_numparse=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{title}\n\n{body}\n")
    else:
        raise InvalidArgumentError(f"Unsupported table format for {path}; use .csv or .md")
    logger.info(f"Wrote {table.metric} table to {path}")
    return path

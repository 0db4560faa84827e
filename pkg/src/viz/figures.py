"""
Diagnostic figures: projected-feature scatter panels, confidence densities and
TNR bar charts.

Rendering uses the Agg backend with a fixed SVG hash salt and no creation
date, so identical inputs give byte-identical SVG files.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import to_rgb  # noqa: E402

from src.eval.metrics import DetectionReport  # noqa: E402
from src.eval.report import BASELINE_METHOD, method_label  # noqa: E402
from src.scoring.table import ORIGINS, ScoreTable  # noqa: E402
from src.utils.common import write_json  # noqa: E402
from src.utils.errors import InvalidArgumentError  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "mixoe-bench"

PANEL_TAGS = ("id", "coarse_ood", "fine_ood", "outlier", "mixed")
PANEL_TITLES = {
    "id": "ID",
    "coarse_ood": "Coarse-grained OOD",
    "fine_ood": "Fine-grained OOD",
    "outlier": "Training outliers",
    "mixed": "Mixed samples",
}
TAG_COLORS = {
    "id": "tab:blue",
    "coarse_ood": "tab:green",
    "fine_ood": "tab:red",
    "outlier": "tab:purple",
    "mixed": "tab:orange",
}
ORIGIN_COLORS = {"id_test": "tab:blue", "fine_ood": "tab:red", "coarse_ood": "tab:green"}
MAX_LIGHTNESS = 0.85


@dataclass
class FigureRecord:
    path: str
    kind: str
    parameters: dict[str, Any] = field(default_factory=dict)
    inputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"path": self.path, "kind": self.kind, "parameters": self.parameters, "inputs": self.inputs}


def write_figure_manifest(records: Sequence[FigureRecord], path: str) -> str:
    write_json([r.to_dict() for r in records], path)
    return path


def _save(fig: plt.Figure, out_path: str, description: str) -> None:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        ext = os.path.splitext(out_path)[1].lower()
        if ext == ".svg":
            metadata = {"Date": None, "Description": description}
        elif ext == ".pdf":
            metadata = {"CreationDate": None, "Subject": description}
        else:
            metadata = {"Description": description}
        fig.savefig(out_path, metadata=metadata)
    except OSError as e:
        raise InvalidArgumentError(f"Cannot write figure to {out_path}: {e}") from e
    finally:
        plt.close(fig)
    logger.info(f"Saved figure {out_path}")


def shade_colors(color: str, confidence: np.ndarray) -> np.ndarray:
    """
    Blend a base color towards white by (1 - confidence).

    Confidence 1 gives the base color; confidence 0 gives the lightest shade.
    """
    base = np.asarray(to_rgb(color))
    c = np.clip(np.asarray(confidence, dtype=np.float64).reshape(-1, 1), 0.0, 1.0)
    return base + (1.0 - c) * MAX_LIGHTNESS * (1.0 - base)


def emit_scatter(
    points: Mapping[str, np.ndarray],
    out_path: str,
    shading: Optional[Mapping[str, np.ndarray]] = None,
) -> FigureRecord:
    """
    Scatter projected points, one panel per tag present (in PANEL_TAGS order).

    ID points are drawn in gray behind every non-ID panel. Without any points
    a single empty panel is rendered.
    """
    unknown = set(points) - set(PANEL_TAGS)
    if unknown:
        raise InvalidArgumentError(f"Unknown point tags {sorted(unknown)}; expected {PANEL_TAGS}")
    shading = shading or {}
    tags = [t for t in PANEL_TAGS if t in points and len(points[t])]
    fig, axes = plt.subplots(1, max(1, len(tags)), figsize=(3.2 * max(1, len(tags)), 3.2), squeeze=False)
    id_points = np.asarray(points.get("id", np.empty((0, 2))), dtype=np.float64).reshape(-1, 2)

    for ax, tag in zip(axes[0], tags):
        xy = np.asarray(points[tag], dtype=np.float64).reshape(-1, 2)
        if tag != "id" and len(id_points):
            ax.scatter(id_points[:, 0], id_points[:, 1], s=4, color="0.85")
        if tag in shading:
            colors = shade_colors(TAG_COLORS[tag], shading[tag])
        else:
            colors = np.tile(to_rgb(TAG_COLORS[tag]), (len(xy), 1))
        ax.scatter(xy[:, 0], xy[:, 1], s=6, c=colors)
        ax.set_title(PANEL_TITLES[tag])
    if not tags:
        axes[0][0].set_title("No points")
    for ax in axes[0]:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    _save(fig, out_path, f"scatter panels={tags}")
    return FigureRecord(
        path=out_path,
        kind="scatter",
        parameters={"panels": tags, "shaded": sorted(t for t in tags if t in shading)},
        inputs=[f"{t}:{len(points[t])}" for t in tags],
    )


def confidence_histogram(scores: np.ndarray, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram on fixed edges over [0, 1]."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    density, _ = np.histogram(np.asarray(scores, dtype=np.float64), bins=edges, density=True)
    return density, edges


def emit_confidence_density(
    score_tables: Mapping[str, ScoreTable], out_path: str, bins: int = 50
) -> FigureRecord:
    """
    One panel per model with a confidence density curve per origin.

    Tables must hold MSP scores. An origin with a single score is drawn as a
    vertical marker.
    """
    if not score_tables:
        raise InvalidArgumentError("No score tables to plot")
    for name, table in score_tables.items():
        if table.scorer != "msp":
            raise InvalidArgumentError(f"Confidence densities need MSP scores, '{name}' has '{table.scorer}'")

    fig, axes = plt.subplots(1, len(score_tables), figsize=(4 * len(score_tables), 3), squeeze=False)
    for ax, (name, table) in zip(axes[0], score_tables.items()):
        for origin in ORIGINS:
            scores = table.select(origin)
            if scores.size == 0:
                continue
            color = ORIGIN_COLORS[origin]
            if scores.size == 1:
                logger.warning(f"{name}/{origin} has a single score; drawing a marker")
                ax.axvline(float(scores[0]), color=color, label=origin)
                continue
            density, edges = confidence_histogram(scores, bins)
            ax.stairs(density, edges, color=color, label=origin)
        ax.set_title(name)
        ax.set_xlim(0.0, 1.0)
        ax.set_xlabel("confidence (MSP)")
        ax.legend(fontsize="small")
    axes[0][0].set_ylabel("density")
    fig.tight_layout()
    _save(fig, out_path, f"histogram bins={bins} range=[0,1] density=True")
    return FigureRecord(
        path=out_path,
        kind="confidence_density",
        parameters={"bins": bins, "range": [0.0, 1.0], "density": True},
        inputs=list(score_tables),
    )


def tnr_bar_values(reports: Sequence[DetectionReport]) -> dict[str, dict[str, float]]:
    """Mean TNR95 per method over splits, keyed by granularity then method."""
    values: dict[str, dict[str, list[float]]] = {"coarse": {}, "fine": {}}
    for report in reports:
        method = method_label(report)
        for granularity in values:
            value = getattr(report, f"tnr95_{granularity}")
            if value is not None:
                values[granularity].setdefault(method, []).append(value)
    return {g: {m: float(np.mean(v)) for m, v in per.items()} for g, per in values.items()}


def emit_tnr_bars(reports: Sequence[DetectionReport], out_path: str) -> FigureRecord:
    """
    Bars of TNR95 per method; coarse-grained in the first row, fine-grained in
    the second. A dashed line marks the MSP baseline.
    """
    if not reports:
        raise InvalidArgumentError("No detection reports to plot")
    values = tnr_bar_values(reports)
    methods = list(dict.fromkeys(method_label(r) for r in reports))

    fig, axes = plt.subplots(2, 1, figsize=(max(4, 1.2 * len(methods)), 6), squeeze=False)
    for ax, granularity in zip(axes[:, 0], ("coarse", "fine")):
        heights = [100 * values[granularity].get(m, np.nan) for m in methods]
        ax.bar(np.arange(len(methods)), heights, color="tab:blue")
        if BASELINE_METHOD in values[granularity]:
            ax.axhline(100 * values[granularity][BASELINE_METHOD], color="gray", linestyle="--")
        ax.set_xticks(np.arange(len(methods)))
        ax.set_xticklabels(methods, rotation=30, ha="right")
        ax.set_ylabel(f"TNR95 ({granularity}) %")
    fig.tight_layout()
    _save(fig, out_path, "tnr95 bars rows=coarse,fine")
    return FigureRecord(
        path=out_path,
        kind="tnr_bars",
        parameters={"methods": methods, "values": values},
        inputs=sorted({f"{r.dataset_name}/split{r.split_index}" for r in reports}),
    )

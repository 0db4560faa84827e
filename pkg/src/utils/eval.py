import os

from src.eval.metrics import DetectionReport


def load_reports(report_dir: str) -> list[DetectionReport]:
    """
    Load every detection report (``*.report.json``) under a directory, in path order.
    """
    paths = []
    for root, _, files in os.walk(report_dir):
        paths.extend(os.path.join(root, name) for name in files if name.endswith(".report.json"))
    return [DetectionReport.load(path) for path in sorted(paths)]


def load_reports_by_dataset(report_dir: str) -> dict[str, list[DetectionReport]]:
    """
    Load reports and group them by dataset, one group per report table.
    """
    grouped: dict[str, list[DetectionReport]] = {}
    for report in load_reports(report_dir):
        grouped.setdefault(report.dataset_name, []).append(report)
    return grouped

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from src.utils.errors import InvalidArgumentError, InvalidDataError

ORIGINS = ("id_test", "fine_ood", "coarse_ood")
COLUMNS = ("example_id", "origin", "scorer", "temperature", "score")


@dataclass
class ScoreTable:
    """Per-example detection scores tagged by origin and scorer."""

    scores: np.ndarray
    origin: list[str]
    scorer: str
    temperature: float = 1.0
    example_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.scores) != len(self.origin):
            raise InvalidArgumentError(
                f"{len(self.scores)} scores but {len(self.origin)} origin tags"
            )
        unknown = set(self.origin) - set(ORIGINS)
        if unknown:
            raise InvalidArgumentError(f"Unknown origins {sorted(unknown)}; expected {ORIGINS}")
        if not self.example_ids:
            self.example_ids = [str(i) for i in range(len(self.scores))]
        if len(self.example_ids) != len(self.scores):
            raise InvalidArgumentError("example_ids must be parallel to scores")

    def __len__(self) -> int:
        return len(self.scores)

    def select(self, origin: str) -> np.ndarray:
        mask = np.array([o == origin for o in self.origin], dtype=bool)
        return self.scores[mask] if len(mask) else np.empty(0)

    def has(self, origin: str) -> bool:
        return origin in self.origin

    def save(self, path: str) -> str:
        """Write one tab-separated row per example; scores keep full float precision."""
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        frame = pd.DataFrame(
            {
                "example_id": self.example_ids,
                "origin": self.origin,
                "scorer": self.scorer,
                "temperature": float(self.temperature),
                "score": self.scores,
            },
            columns=list(COLUMNS),
        )
        frame.to_csv(path, sep="\t", index=False)
        return path

    @classmethod
    def load(cls, path: str) -> "ScoreTable":
        try:
            frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError as exc:
            raise InvalidDataError(f"Score table {path} is empty") from exc
        if tuple(frame.columns) != COLUMNS:
            raise InvalidDataError(f"Unexpected score table header in {path}: {list(frame.columns)}")
        scorers = frame["scorer"].unique()
        temperatures = frame["temperature"].astype(np.float64).unique()
        if len(scorers) > 1 or len(temperatures) > 1:
            raise InvalidDataError(f"Score table {path} mixes scorers or temperatures")
        return cls(
            scores=frame["score"].astype(np.float64).to_numpy(),
            origin=frame["origin"].tolist(),
            scorer=str(scorers[0]) if len(scorers) else "msp",
            temperature=float(temperatures[0]) if len(temperatures) else 1.0,
            example_ids=frame["example_id"].tolist(),
        )

    @staticmethod
    def from_parts(
        parts: dict[str, np.ndarray],
        scorer: str,
        temperature: float = 1.0,
        example_ids: Optional[dict[str, list[str]]] = None,
    ) -> "ScoreTable":
        """Assemble a table from per-origin score arrays, in ORIGINS order."""
        scores, origin, ids = [], [], []
        for name in ORIGINS:
            if name not in parts:
                continue
            values = np.asarray(parts[name], dtype=np.float64)
            scores.append(values)
            origin.extend([name] * len(values))
            if example_ids is not None and name in example_ids:
                ids.extend(example_ids[name])
            else:
                ids.extend(f"{name}/{i}" for i in range(len(values)))
        return ScoreTable(
            scores=np.concatenate(scores) if scores else np.empty(0),
            origin=origin,
            scorer=scorer,
            temperature=temperature,
            example_ids=ids,
        )

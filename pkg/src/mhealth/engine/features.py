"""Vitals to network inputs, and the labelled dataset file."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from mhealth.vitals import VitalsSample

# Clinical windows mapped onto [0, 1]; values outside are clipped.
WINDOWS = np.array([
    [70.0, 100.0],   # spo2_pct
    [30.0, 200.0],   # hr_bpm
    [34.0, 42.0],    # temp_c
    [0.0, 1.0],      # activity_level
])

DATASET_HEADER = ["spo2_pct", "hr_bpm", "temp_c", "activity_level", "label"]


class ParseError(ValueError):
    pass


def normalize_raw(raw: np.ndarray, n_inputs: int) -> np.ndarray:
    """Normalise rows of raw (spo2, hr, temp, activity) values."""
    if n_inputs not in (3, 4):
        raise ValueError(f"n_inputs must be 3 or 4, got {n_inputs}")
    raw = np.asarray(raw, dtype=np.float64)
    lo, hi = WINDOWS[:n_inputs, 0], WINDOWS[:n_inputs, 1]
    return np.clip((raw[..., :n_inputs] - lo) / (hi - lo), 0.0, 1.0)


def normalize(s: VitalsSample, n_inputs: int = 4) -> np.ndarray:
    raw = np.array([s.spo2_pct, s.hr_bpm, s.temp_c, s.activity_level])
    return normalize_raw(raw, n_inputs)


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Raw readings plus binary labels; features are derived on demand."""

    raw: np.ndarray      # (n, 4) spo2, hr, temp, activity
    labels: np.ndarray   # (n,) 0 or 1

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64).reshape(-1, 4)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if raw.shape[0] != labels.shape[0]:
            raise ValueError("raw rows and labels differ in length")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def features(self, n_inputs: int) -> np.ndarray:
        return np.ascontiguousarray(normalize_raw(self.raw, n_inputs))

    def subset(self, idx: Sequence[int]) -> "LabeledSet":
        idx = np.asarray(idx)
        return LabeledSet(self.raw[idx], self.labels[idx])

    @property
    def anomaly_fraction(self) -> float:
        return float(self.labels.mean()) if len(self) else 0.0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DATASET_HEADER)
            for row, y in zip(self.raw, self.labels):
                w.writerow([repr(float(v)) for v in row] + [int(y)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "LabeledSet":
        raw, labels = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != DATASET_HEADER:
                raise ParseError(f"{path}:1: expected header {','.join(DATASET_HEADER)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 5:
                    raise ParseError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
                try:
                    vals = [float(v) for v in row[:4]]
                    y = int(row[4])
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
                if y not in (0, 1) or not np.isfinite(vals).all():
                    raise ParseError(f"{path}:{lineno}: bad label or non-finite value")
                raw.append(vals)
                labels.append(y)
        if not raw:
            raise ParseError(f"{path}: no data rows")
        return cls(np.array(raw), np.array(labels))

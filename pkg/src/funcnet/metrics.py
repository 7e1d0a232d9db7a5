"""Trajectory metrics for 2-D screen-position predictions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError

REPORT_FIELDS = ("med", "med_per_recording", "precision", "corr_x", "corr_y", "corr_mean", "mae")


def _pair(truth, prediction, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if truth.ndim != 2 or truth.shape[1] != 2:
        raise DataError(f"trajectories must be (N, 2), got {truth.shape}")
    if truth.shape != prediction.shape:
        raise DataError(f"truth {truth.shape} and prediction {prediction.shape} differ in shape")
    if len(truth) < min_len:
        raise DataError(f"need at least {min_len} samples, got {len(truth)}")
    return truth, prediction


def med(truth, prediction) -> float:
    """Mean Euclidean distance between true and predicted positions."""
    truth, prediction = _pair(truth, prediction)
    return float(np.mean(np.hypot(*(truth - prediction).T)))


def aggregate_med(per_recording) -> float:
    """Sample-weighted mean of ``(n_k, med_k)`` pairs."""
    per_recording = list(per_recording)
    if not per_recording:
        raise DataError("aggregate_med needs at least one recording")
    counts = np.array([n for n, _ in per_recording], dtype=np.float64)
    if np.any(counts < 1):
        raise DataError("every recording needs at least one sample")
    values = np.array([m for _, m in per_recording], dtype=np.float64)
    return float(np.dot(counts, values) / counts.sum())


def precision(truth, prediction, normalization: str = "n") -> float:
    """Mean distance between successive true and predicted displacement vectors.

    The N-1 displacement terms are divided by N by default; ``"n-1"``
    divides by the number of terms instead.
    """
    truth, prediction = _pair(truth, prediction, min_len=2)
    step_err = np.diff(prediction, axis=0) - np.diff(truth, axis=0)
    total = np.hypot(*step_err.T).sum()
    if normalization == "n":
        return float(total / len(truth))
    if normalization == "n-1":
        return float(total / (len(truth) - 1))
    raise ValueError(f"unknown normalization '{normalization}'")


def _pearson_1d(a: np.ndarray, b: np.ndarray) -> float:
    # A constant series has no defined correlation; report 0.
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        return 0.0
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.dot(da, da)) * np.sqrt(np.dot(db, db))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.dot(da, db) / denom, -1.0, 1.0))


def pearson(truth, prediction, axis: str) -> float:
    truth, prediction = _pair(truth, prediction, min_len=2)
    col = {"x": 0, "y": 1}[axis]
    return _pearson_1d(truth[:, col], prediction[:, col])


def corr_mean(truth, prediction) -> float:
    return 0.5 * (pearson(truth, prediction, "x") + pearson(truth, prediction, "y"))


def mae_2d(truth, prediction, unit_factor: float = 1.0) -> float:
    """Average of the per-axis mean absolute errors, times ``unit_factor``."""
    truth, prediction = _pair(truth, prediction)
    return float(unit_factor * np.mean(np.abs(truth - prediction)))


@dataclass
class RecordingMetrics:
    recording_id: str
    n: int
    med: float
    precision: float
    corr_x: float
    corr_y: float
    mae: float


@dataclass
class MetricsReport:
    med: float
    med_per_recording: dict[str, float]
    precision: float
    corr_x: float
    corr_y: float
    corr_mean: float
    mae: float | None = None
    n_per_recording: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"med": self.med, "med_per_recording": dict(self.med_per_recording),
                "precision": self.precision, "corr_x": self.corr_x, "corr_y": self.corr_y,
                "corr_mean": self.corr_mean, "mae": self.mae}

    def to_json(self, path=None, **extra) -> str:
        text = json.dumps(self.to_dict() | extra, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def evaluate_recordings(pairs, precision_normalization: str = "n", unit_factor: float = 1.0) -> MetricsReport:
    """Per-recording metrics combined with sample-count weights.

    ``pairs`` is an iterable of ``(recording_id, truth, prediction)``.
    ``unit_factor`` rescales the distance metrics (MED, precision, MAE), for
    example 0.5 to report EEGEyeNet pixels in millimetres.
    """
    rows = []
    for rec_id, truth, pred in pairs:
        truth, pred = _pair(truth, pred, min_len=2)
        rows.append(RecordingMetrics(str(rec_id), len(truth), unit_factor * med(truth, pred),
                                     unit_factor * precision(truth, pred, precision_normalization),
                                     pearson(truth, pred, "x"), pearson(truth, pred, "y"),
                                     mae_2d(truth, pred, unit_factor)))
    if not rows:
        raise DataError("no recordings to evaluate")
    n = np.array([r.n for r in rows], dtype=np.float64)

    def weighted(attr):
        return float(np.dot(n, [getattr(r, attr) for r in rows]) / n.sum())

    cx, cy = weighted("corr_x"), weighted("corr_y")
    return MetricsReport(
        med=aggregate_med((r.n, r.med) for r in rows),
        med_per_recording={r.recording_id: r.med for r in rows},
        precision=weighted("precision"), corr_x=cx, corr_y=cy, corr_mean=0.5 * (cx + cy),
        mae=weighted("mae"), n_per_recording={r.recording_id: r.n for r in rows})


def summarize_repeats(reports) -> dict[str, dict[str, float]]:
    """Mean and standard deviation of each scalar metric over repeated runs."""
    reports = list(reports)
    out = {}
    for name in ("med", "precision", "corr_x", "corr_y", "corr_mean", "mae"):
        vals = np.array([getattr(r, name) for r in reports if getattr(r, name) is not None])
        if vals.size:
            out[name] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1) if vals.size > 1 else 0.0)}
    return out

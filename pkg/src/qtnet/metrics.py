"""Regression and detection metrics plus the serializable report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError, UndefinedValueError


def _pair(a, b, min_len=1):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise InvalidArgumentError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise InvalidArgumentError(f"need at least {min_len} values, got {a.size}")
    return a, b


def mae(predictions: Sequence[float], labels: Sequence[float]) -> float:
    p, y = _pair(predictions, labels)
    return float(np.mean(np.abs(p - y)))


def pearson_r(predictions: Sequence[float], labels: Sequence[float]) -> float:
    """Sample Pearson correlation, clipped to [-1, 1] against rounding."""
    p, y = _pair(predictions, labels, min_len=2)
    dp = p - p.mean()
    dy = y - y.mean()
    sp = np.sqrt(np.sum(dp * dp) / (p.size - 1))
    sy = np.sqrt(np.sum(dy * dy) / (y.size - 1))
    if sp == 0 or sy == 0:
        raise DegenerateInputError("Pearson correlation needs non-constant inputs")
    r = np.sum(dp * dy) / ((p.size - 1) * sp * sy)
    return float(np.clip(r, -1.0, 1.0))


@dataclass(frozen=True)
class DetectionMetrics:
    sensitivity: float
    specificity: float
    accuracy: float
    prevalence: float
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


def detection_metrics(predicted_events: Sequence[bool], true_events: Sequence[bool]) -> DetectionMetrics:
    pred = np.asarray(predicted_events, dtype=bool).ravel()
    true = np.asarray(true_events, dtype=bool).ravel()
    if pred.size != true.size:
        raise InvalidArgumentError(f"length mismatch: {pred.size} vs {true.size}")
    if pred.size == 0:
        raise InvalidArgumentError("no events to score")
    tp = int(np.sum(pred & true))
    fn = int(np.sum(~pred & true))
    fp = int(np.sum(pred & ~true))
    tn = int(np.sum(~pred & ~true))
    if tp + fn == 0:
        raise UndefinedValueError("sensitivity undefined: no positive labels")
    if tn + fp == 0:
        raise UndefinedValueError("specificity undefined: no negative labels")
    n = pred.size
    return DetectionMetrics(tp / (tp + fn), tn / (tn + fp), (tp + tn) / n, (tp + fn) / n,
                            tp, fn, fp, tn)


@dataclass
class MetricsReport:
    n: int
    qt_mae_ms: Optional[float] = None
    hr_mae_bpm: Optional[float] = None
    qt_pearson_r: Optional[float] = None
    hr_pearson_r: Optional[float] = None
    detection: Optional[dict] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("a report needs at least one record")
        for name in ("qt_pearson_r", "hr_pearson_r"):
            v = getattr(self, name)
            if v is not None and not -1.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} outside [-1, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

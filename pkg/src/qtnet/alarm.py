"""Bazett correction, MAE-adjusted prolongation alarms, and predictive values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, IncompleteTimelineError, InvalidArgumentError, UndefinedValueError
from .signal import EcgRecord, IntervalLabels
from .wfdb import DosingTimeline, TimelineEntry

ADJUSTMENT_SIGNS = {"add": 1.0, "subtract": -1.0, "none": 0.0}
CRITERIA = ("none", "absolute", "relative", "both")


def bazett_qtc(qt_ms: float, hr_bpm: float) -> float:
    """QTc = QT * sqrt(HR / 60)."""
    if not qt_ms > 0 or not hr_bpm > 0:
        raise InvalidArgumentError(f"QT and HR must be positive, got ({qt_ms}, {hr_bpm})")
    if hr_bpm == 60:
        return float(qt_ms)
    return float(qt_ms * math.sqrt(hr_bpm / 60.0))


def adjust_qtc(qtc_est_ms: float, training_mae_ms: float, sign: Union[str, float] = "add") -> float:
    """Shift an estimate by the training MAE; ``sign`` is "add", "subtract", "none" or +-1/0."""
    if training_mae_ms < 0:
        raise InvalidArgumentError(f"training MAE must be non-negative, got {training_mae_ms}")
    if isinstance(sign, str):
        try:
            sign = ADJUSTMENT_SIGNS[sign]
        except KeyError:
            raise InvalidArgumentError(f"unknown adjustment {sign!r}") from None
    elif sign not in (-1, 0, 1):
        raise InvalidArgumentError(f"adjustment sign must be -1, 0 or 1, got {sign}")
    return float(qtc_est_ms + sign * training_mae_ms)


@dataclass(frozen=True)
class AlarmConfig:
    absolute_threshold_ms: float = 500.0
    relative_threshold: float = 0.15
    training_mae_qtc_ms: float = 12.63
    adjustment: str = "add"
    replicate_aggregation: str = "median"

    def __post_init__(self):
        if not self.absolute_threshold_ms > 0 or not self.relative_threshold > 0:
            raise ConfigError("alarm thresholds must be positive")
        if self.training_mae_qtc_ms < 0:
            raise ConfigError("training MAE must be non-negative")
        if self.adjustment not in ADJUSTMENT_SIGNS:
            raise ConfigError(f"adjustment must be one of {sorted(ADJUSTMENT_SIGNS)}")
        if self.replicate_aggregation not in ("median", "mean"):
            raise ConfigError("replicate_aggregation must be 'median' or 'mean'")

    @classmethod
    def from_checkpoint(cls, checkpoint, **overrides) -> "AlarmConfig":
        mae = checkpoint.training_mae
        return cls(training_mae_qtc_ms=float(mae.get("qtc_ms", mae["qt_ms"])), **overrides)

    def adjust(self, qtc_ms: float) -> float:
        return adjust_qtc(qtc_ms, self.training_mae_qtc_ms, self.adjustment)

    def aggregate(self, values: Sequence[float]) -> float:
        values = np.asarray(values, dtype=np.float64)
        return float(np.median(values) if self.replicate_aggregation == "median" else values.mean())


@dataclass(frozen=True)
class AlarmDecision:
    time_offset_h: float
    qtc_est_ms: float
    qtc_adjusted_ms: float
    baseline_qtc_adjusted_ms: float
    triggered: bool
    criterion: str

    def to_dict(self) -> dict:
        return {
            "t_h": self.time_offset_h,
            "qtc_est": self.qtc_est_ms,
            "qtc_adj": self.qtc_adjusted_ms,
            "baseline_qtc_adj": self.baseline_qtc_adjusted_ms,
            "triggered": self.triggered,
            "criterion": self.criterion,
        }


def detect_prolongation(baseline_qtc_adj_ms: float, qtc_t_adj_ms: float,
                        config: AlarmConfig = AlarmConfig()) -> Tuple[bool, str]:
    """Return ``(triggered, criterion)``; the relative test is inclusive at the threshold."""
    if not baseline_qtc_adj_ms > 0 or not qtc_t_adj_ms > 0:
        raise InvalidArgumentError("adjusted QTc values must be positive")
    absolute = qtc_t_adj_ms > config.absolute_threshold_ms
    relative = qtc_t_adj_ms >= (1.0 + config.relative_threshold) * baseline_qtc_adj_ms
    criterion = CRITERIA[int(absolute) + 2 * int(relative)]
    return criterion != "none", criterion


Estimator = Callable[[EcgRecord], Union[IntervalLabels, Tuple[float, float]]]


def estimate_qtc(estimator: Estimator, record: EcgRecord) -> float:
    out = estimator(record)
    if isinstance(out, IntervalLabels):
        return bazett_qtc(out.qt_ms, out.hr_bpm)
    qt, hr = out
    return bazett_qtc(qt, hr)


def _timepoint(entries: Sequence[TimelineEntry], estimator: Estimator, config: AlarmConfig):
    raw = [estimate_qtc(estimator, e.record) for e in entries]
    return config.aggregate(raw), config.aggregate([config.adjust(q) for q in raw])


def run_dosing_session(timeline: DosingTimeline, estimator: Estimator,
                       config: AlarmConfig = AlarmConfig()) -> List[AlarmDecision]:
    """Baseline from every pre-dose record, then one decision per post-dose offset."""
    pre = [e for e in timeline.entries if e.time_offset_h < 0]
    if not pre:
        raise IncompleteTimelineError(f"subject {timeline.subject_id!r} has no pre-dose record")
    _, baseline_adj = _timepoint(pre, estimator, config)
    decisions = []
    for t in timeline.offsets:
        if t < 0:
            continue
        est, adj = _timepoint(timeline.at(t), estimator, config)
        triggered, criterion = detect_prolongation(baseline_adj, adj, config)
        decisions.append(AlarmDecision(t, est, adj, baseline_adj, triggered, criterion))
    return decisions


# ----------------------------------------------------------------------------
# predictive values

@dataclass(frozen=True)
class PredictiveValues:
    sensitivity: float
    specificity: float
    prevalence: float
    ppv: float
    npv: float


def _check_unit(**values) -> None:
    for name, v in values.items():
        if not 0.0 <= v <= 1.0:
            raise InvalidArgumentError(f"{name} must lie in [0, 1], got {v}")


def ppv(sensitivity: float, specificity: float, prevalence: float) -> float:
    _check_unit(sensitivity=sensitivity, specificity=specificity, prevalence=prevalence)
    num = sensitivity * prevalence
    den = num + (1.0 - specificity) * (1.0 - prevalence)
    if den == 0:
        raise UndefinedValueError("PPV undefined: no predicted positives")
    return num / den


def npv(sensitivity: float, specificity: float, prevalence: float) -> float:
    _check_unit(sensitivity=sensitivity, specificity=specificity, prevalence=prevalence)
    num = specificity * (1.0 - prevalence)
    den = (1.0 - sensitivity) * prevalence + num
    if den == 0:
        raise UndefinedValueError("NPV undefined: no predicted negatives")
    return num / den


def predictive_values(sensitivity, specificity, prevalence) -> PredictiveValues:
    return PredictiveValues(sensitivity, specificity, prevalence,
                            ppv(sensitivity, specificity, prevalence),
                            npv(sensitivity, specificity, prevalence))


def predictive_value_curve(sensitivity: float, specificity: float,
                           grid: Sequence[float]) -> List[PredictiveValues]:
    """PPV and NPV at each prevalence in ``grid`` (open interval (0, 1))."""
    grid = list(grid)
    if not grid:
        raise InvalidArgumentError("prevalence grid is empty")
    for p in grid:
        if not 0.0 < p < 1.0:
            raise InvalidArgumentError(f"grid prevalence {p} outside (0, 1)")
    return [predictive_values(sensitivity, specificity, p) for p in grid]

"""Dataset-level evaluation and a synthetic dosing-timeline corpus."""

from __future__ import annotations

from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .alarm import (AlarmConfig, AlarmDecision, bazett_qtc, detect_prolongation, ppv, npv,
                    run_dosing_session)
from .checkpoint import ModelCheckpoint
from .errors import (DegenerateInputError, DelineationFailureError, InsufficientBeatsError,
                     InvalidDatasetError, UndefinedValueError)
from .infer import predict_many
from .metrics import MetricsReport, detection_metrics, mae, pearson_r
from .signal import EcgRecord, IntervalLabels
from .synth import BeatParams, synthesize
from .wfdb import DosingTimeline, TimelineEntry

Estimator = Callable[[EcgRecord], IntervalLabels]

# failures of the classical pipeline are scored at the population centre
RECOVERABLE = (DelineationFailureError, InsufficientBeatsError)


def oracle_estimator(record: EcgRecord) -> IntervalLabels:
    """Returns the record's own labels."""
    if record.labels is None:
        raise InvalidDatasetError(f"record {record.record_id!r} is unlabelled")
    return record.labels


def estimate_all(estimator: Union[ModelCheckpoint, Estimator], records: Sequence[EcgRecord],
                 fallback: Optional[IntervalLabels] = None) -> Tuple[np.ndarray, int]:
    """(N, 2) [qt_ms, hr_bpm] estimates and the number of fallbacks used."""
    if isinstance(estimator, ModelCheckpoint):
        out = predict_many(estimator, [r.signal for r in records])
        return np.array([[o.qt_ms, o.hr_bpm] for o in out]), 0
    rows, failures = [], 0
    for rec in records:
        try:
            lab = estimator(rec)
        except RECOVERABLE:
            if fallback is None:
                raise
            lab = fallback
            failures += 1
        rows.append([lab.qt_ms, lab.hr_bpm])
    return np.array(rows, dtype=np.float64).reshape(-1, 2), failures


def _safe_r(p, y):
    try:
        return pearson_r(p, y)
    except DegenerateInputError:
        return None


def evaluate_regression(estimator: Union[ModelCheckpoint, Estimator],
                        dataset: Sequence[EcgRecord],
                        fallback: Optional[IntervalLabels] = None,
                        name: str = "") -> MetricsReport:
    """MAE and Pearson-R for QT and HR over a labelled dataset.

    ``estimator`` is a checkpoint (batched inference) or any callable
    mapping a record to :class:`IntervalLabels`. With ``fallback`` set,
    records on which a callable fails to find beats or a T end are scored
    at that value and counted in ``info["n_failures"]``.
    """
    if len(dataset) == 0:
        raise InvalidDatasetError("dataset is empty")
    for rec in dataset:
        if rec.labels is None:
            raise InvalidDatasetError(f"record {rec.record_id!r} is unlabelled")
    y = np.array([[r.labels.qt_ms, r.labels.hr_bpm] for r in dataset])
    p, failures = estimate_all(estimator, dataset, fallback)
    return MetricsReport(
        n=len(dataset),
        qt_mae_ms=mae(p[:, 0], y[:, 0]),
        hr_mae_bpm=mae(p[:, 1], y[:, 1]),
        qt_pearson_r=_safe_r(p[:, 0], y[:, 0]),
        hr_pearson_r=_safe_r(p[:, 1], y[:, 1]),
        info={"estimator": name, "n_failures": failures},
    )


def _adjudicated(entry: TimelineEntry) -> IntervalLabels:
    lab = entry.adjudicated_labels or entry.record.labels
    if lab is None:
        raise InvalidDatasetError(f"timeline record {entry.record.record_id!r} has no adjudicated labels")
    return lab


def truth_events(timeline: DosingTimeline, config: AlarmConfig) -> List[Tuple[float, bool]]:
    """Per post-dose offset: does the adjudicated (unadjusted) QTc meet either criterion?"""
    def qtc(entries):
        return config.aggregate([bazett_qtc(_adjudicated(e).qt_ms, _adjudicated(e).hr_bpm)
                                 for e in entries])
    baseline = qtc([e for e in timeline.entries if e.time_offset_h < 0])
    return [(t, detect_prolongation(baseline, qtc(timeline.at(t)), config)[0])
            for t in timeline.offsets if t >= 0]


def evaluate_detection(timelines: Sequence[DosingTimeline], estimator: Estimator,
                       alarm_config: AlarmConfig = AlarmConfig(),
                       return_decisions: bool = False):
    """Pooled timepoint-level sensitivity/specificity of the alarm path.

    Truth comes from adjudicated labels through the same thresholds without
    the training-MAE shift; predictions from ``estimator`` through
    :func:`run_dosing_session` with ``alarm_config``.
    """
    if not timelines:
        raise InvalidDatasetError("no timelines to evaluate")
    predicted, truth, est, lab = [], [], [], []
    decisions: List[Tuple[str, AlarmDecision]] = []
    for tl in timelines:
        for e in tl.entries:
            lab.append([_adjudicated(e).qt_ms, _adjudicated(e).hr_bpm])
            out = estimator(e.record)
            est.append([out.qt_ms, out.hr_bpm])
        for (t, is_true), d in zip(truth_events(tl, alarm_config),
                                   run_dosing_session(tl, estimator, alarm_config)):
            assert t == d.time_offset_h
            truth.append(is_true)
            predicted.append(d.triggered)
            decisions.append((tl.subject_id, d))
    dm = detection_metrics(predicted, truth)
    block = {
        "sensitivity": dm.sensitivity,
        "specificity": dm.specificity,
        "accuracy": dm.accuracy,
        "prevalence": dm.prevalence,
        "tp": dm.tp, "fn": dm.fn, "fp": dm.fp, "tn": dm.tn,
    }
    for key, fn in (("ppv", ppv), ("npv", npv)):
        try:
            block[key] = fn(dm.sensitivity, dm.specificity, dm.prevalence)
        except UndefinedValueError:
            block[key] = None
    est, lab = np.asarray(est), np.asarray(lab)
    report = MetricsReport(
        n=dm.n,
        qt_mae_ms=mae(est[:, 0], lab[:, 0]),
        hr_mae_bpm=mae(est[:, 1], lab[:, 1]),
        qt_pearson_r=_safe_r(est[:, 0], lab[:, 0]),
        hr_pearson_r=_safe_r(est[:, 1], lab[:, 1]),
        detection=block,
        info={"n_timelines": len(timelines), "n_records": len(lab)},
    )
    return (report, decisions) if return_decisions else report


# ----------------------------------------------------------------------------
# synthetic dosing sessions

# trial schedule in hours relative to dosing (one pre-dose, fifteen post-dose)
DOSING_SCHEDULE_H = (-0.5, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0, 8.0, 12.0, 14.0, 24.0)


def drug_effect(t_h: np.ndarray, peak_ms: float, t_peak_h: float = 2.0) -> np.ndarray:
    """Gamma-shaped QT increment: zero before dosing, ``peak_ms`` at ``t_peak_h``."""
    t = np.clip(np.asarray(t_h, dtype=np.float64), 0.0, None)
    shape = t / t_peak_h * np.exp(1.0 - t / t_peak_h)
    return peak_ms * shape


def synthetic_timeline(subject_id: str, seed, drug_name: str = "dofetilide",
                       schedule: Sequence[float] = DOSING_SCHEDULE_H, replicates: int = 1,
                       noise_std: float = 0.02) -> DosingTimeline:
    rng = np.random.default_rng(seed)
    base_qt = rng.normal(400.0, 25.0)
    base_hr = float(np.clip(rng.normal(65.0, 8.0), 45.0, 95.0))
    peak = rng.uniform(0.0, 120.0)
    entries = []
    for k, t in enumerate(schedule):
        for j in range(replicates):
            hr = float(np.clip(base_hr + rng.normal(0.0, 3.0), 40.0, 110.0))
            qt = float(base_qt + drug_effect(t, peak) + rng.normal(0.0, 5.0))
            qt = float(np.clip(qt, 250.0, min(650.0, 60000.0 / hr - 60.0)))
            params = BeatParams(hr_bpm=hr, qt_ms=qt, t_amplitude=rng.uniform(0.2, 0.4),
                                noise_std=noise_std)
            sig, labels = synthesize(params, seed=[int(x) for x in np.atleast_1d(seed)] + [k, j])
            rec = EcgRecord(sig, labels, f"{subject_id}-t{k:02d}-r{j}", subject_id)
            entries.append(TimelineEntry(float(t), rec, labels))
    return DosingTimeline(subject_id, drug_name, entries)


def synthetic_dosing_corpus(n_timelines: int = 20, seed: int = 0, replicates: int = 1,
                            noise_std: float = 0.02) -> List[DosingTimeline]:
    return [synthetic_timeline(f"dose{i:03d}", [seed, i], replicates=replicates,
                               noise_std=noise_std)
            for i in range(n_timelines)]


# ----------------------------------------------------------------------------
# the representative single-patient replay

REPRESENTATIVE_TRAJECTORY = (
    # (t_h, qt_ms, hr_bpm): pre-dose baseline, a rise peaking near two hours, then recovery
    (-0.5, 400.0, 60.0),
    (0.5, 410.0, 60.0),
    (1.0, 430.0, 60.0),
    (1.5, 470.0, 60.0),
    (2.0, 480.0, 60.0),
    (2.5, 455.0, 60.0),
    (3.0, 450.0, 60.0),
    (4.0, 440.0, 60.0),
    (6.0, 425.0, 60.0),
    (8.0, 415.0, 60.0),
    (12.0, 405.0, 60.0),
    (24.0, 400.0, 60.0),
)


def representative_timeline(subject_id: str = "rep") -> DosingTimeline:
    """Noise-free records whose labels follow :data:`REPRESENTATIVE_TRAJECTORY`."""
    entries = []
    for k, (t, qt, hr) in enumerate(REPRESENTATIVE_TRAJECTORY):
        sig, labels = synthesize(BeatParams(hr_bpm=hr, qt_ms=qt), seed=k)
        entries.append(TimelineEntry(t, EcgRecord(sig, labels, f"{subject_id}-{k:02d}", subject_id),
                                     labels))
    return DosingTimeline(subject_id, "dofetilide", entries)


def trajectory_estimator(trajectory=REPRESENTATIVE_TRAJECTORY):
    """Mock estimator that looks up a record's timepoint in ``trajectory``."""
    by_index = {k: IntervalLabels(qt_ms=qt, hr_bpm=hr) for k, (_, qt, hr) in enumerate(trajectory)}

    def estimate(record: EcgRecord) -> IntervalLabels:
        return by_index[int(record.record_id.rsplit("-", 1)[1])]
    return estimate

"""Model-input preprocessing and checkpoint inference."""

from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .checkpoint import ModelCheckpoint
from .errors import DegenerateInputError, ShapeError
from .signal import (CANONICAL_RATE, EcgSignal, IntervalLabels, canonicalize,
                     remove_baseline_wander, standardize_input)

BASELINE_WINDOW_S = 1.0

PREPROCESSING = {
    "rate_hz": CANONICAL_RATE,
    "baseline": "moving-median",
    "baseline_window_s": BASELINE_WINDOW_S,
    "amplitude": "per-record standardization (population std)",
    "quantization": "float32",
}


def prepare_input(signal: EcgSignal, length: int) -> np.ndarray:
    """Canonicalize, remove wander, standardize, and round to float32 precision.

    The float32 rounding absorbs last-bit differences that standardization
    leaves behind after an amplitude rescale, so scaled copies of a record
    feed the network identical samples.
    """
    sig = canonicalize(signal, CANONICAL_RATE, length)
    sig = remove_baseline_wander(sig, BASELINE_WINDOW_S)
    sig = standardize_input(sig)
    return sig.samples.astype(np.float32).astype(np.float64)


def prepare_batch(signals: Sequence[EcgSignal], length: int) -> np.ndarray:
    out = np.empty((len(signals), 1, length))
    for i, s in enumerate(signals):
        out[i, 0] = prepare_input(s, length)
    return out


def predict_array(checkpoint: ModelCheckpoint, batch: np.ndarray) -> np.ndarray:
    """(N, L) or (N, 1, L) preprocessed inputs -> (N, 2) physical [qt_ms, hr_bpm]."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 2:
        batch = batch[:, None, :]
    n = checkpoint.config.input_length
    if batch.ndim != 3 or batch.shape[1:] != (1, n):
        raise ShapeError(f"expected inputs of shape (N, 1, {n}), got {batch.shape}")
    z = checkpoint.model().predict_z(batch)
    stats = checkpoint.target_stats
    return z * stats.stds + stats.means


def _labels(qt: float, hr: float) -> IntervalLabels:
    if not (qt > 0 and hr > 0):
        raise DegenerateInputError(f"model output is not a physical interval: qt={qt:.3f} ms, hr={hr:.3f} bpm")
    return IntervalLabels(qt_ms=float(qt), hr_bpm=float(hr))


def predict(checkpoint: ModelCheckpoint, signal: EcgSignal) -> IntervalLabels:
    x = prepare_input(signal, checkpoint.config.input_length)
    return _labels(*predict_array(checkpoint, x[None, :])[0])


def predict_many(checkpoint: ModelCheckpoint, signals: Sequence[EcgSignal]) -> List[IntervalLabels]:
    out = predict_array(checkpoint, prepare_batch(signals, checkpoint.config.input_length))
    return [_labels(q, h) for q, h in out]


def checkpoint_estimator(checkpoint: ModelCheckpoint):
    """Adapter mapping an EcgRecord to model-estimated IntervalLabels."""
    def estimate(record) -> IntervalLabels:
        return predict(checkpoint, record.signal)
    return estimate

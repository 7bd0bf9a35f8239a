"""Single-lead waveform containers and the preprocessing shared by every consumer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, InvalidArgumentError

CANONICAL_RATE = 250.0
CANONICAL_LENGTH = 2500


@dataclass(frozen=True, eq=False)
class EcgSignal:
    """Samples in millivolts at a fixed sampling rate."""

    samples: np.ndarray
    sampling_rate: float
    lead_name: str = "I"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidArgumentError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("samples must be finite")
        if not self.sampling_rate > 0:
            raise InvalidArgumentError(f"sampling_rate must be positive, got {self.sampling_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sampling_rate", float(self.sampling_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sampling_rate

    def replace(self, samples, sampling_rate=None) -> "EcgSignal":
        rate = self.sampling_rate if sampling_rate is None else sampling_rate
        return EcgSignal(samples, rate, self.lead_name)


@dataclass(frozen=True)
class IntervalLabels:
    qt_ms: float
    hr_bpm: float
    qtc_ms: Optional[float] = None

    def __post_init__(self):
        if not self.qt_ms > 0:
            raise InvalidArgumentError(f"qt_ms must be positive, got {self.qt_ms}")
        if not self.hr_bpm > 0:
            raise InvalidArgumentError(f"hr_bpm must be positive, got {self.hr_bpm}")
        if self.qtc_ms is not None and not self.qtc_ms > 0:
            raise InvalidArgumentError(f"qtc_ms must be positive, got {self.qtc_ms}")


@dataclass(frozen=True, eq=False)
class EcgRecord:
    signal: EcgSignal
    labels: Optional[IntervalLabels] = None
    record_id: str = ""
    subject_id: str = ""
    meta: dict = field(default_factory=dict)

    def canonical(self, rate: float = CANONICAL_RATE, length: int = CANONICAL_LENGTH) -> "EcgRecord":
        sig = canonicalize(self.signal, rate, length)
        if not 9.5 <= sig.duration <= 10.5:
            raise InvalidArgumentError(f"canonical duration {sig.duration:.3f} s outside [9.5, 10.5]")
        return EcgRecord(sig, self.labels, self.record_id, self.subject_id, dict(self.meta))


def resample(signal: EcgSignal, target_rate: float) -> EcgSignal:
    """Linearly interpolate ``signal`` onto a ``target_rate`` grid.

    The output keeps the input duration (``n / rate``) to within one output
    sample. Sample times past the last source sample are extended along the
    final segment so that degree-1 signals are reproduced exactly.
    """
    if not target_rate > 0:
        raise InvalidArgumentError(f"target_rate must be positive, got {target_rate}")
    if target_rate == signal.sampling_rate:
        return signal.replace(signal.samples.copy())
    x = signal.samples
    n_in = x.size
    n_out = max(1, int(round(n_in * target_rate / signal.sampling_rate)))
    if n_in == 1:
        return signal.replace(np.full(n_out, x[0]), target_rate)
    pos = np.arange(n_out) * (signal.sampling_rate / target_rate)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n_in - 2)
    frac = pos - i0
    y = x[i0] + frac * (x[i0 + 1] - x[i0])
    return signal.replace(y, target_rate)


def window_samples(window_s: float, rate: float) -> int:
    n = int(round(window_s * rate))
    return n + 1 if n % 2 == 0 else n


def remove_baseline_wander(signal: EcgSignal, window_s: float = 1.0) -> EcgSignal:
    """Subtract a moving-median baseline estimated over ``window_s`` seconds."""
    if not window_s > 0:
        raise InvalidArgumentError(f"window_s must be positive, got {window_s}")
    width = window_samples(window_s, signal.sampling_rate)
    if width >= len(signal):
        raise InvalidArgumentError(
            f"baseline window of {width} samples covers the whole {len(signal)}-sample signal"
        )
    baseline = ndimage.median_filter(signal.samples, size=width, mode="nearest")
    return signal.replace(signal.samples - baseline)


def standardize_input(signal: EcgSignal) -> EcgSignal:
    """Zero-mean, unit (population) standard deviation copy of ``signal``."""
    x = signal.samples
    mean = x.mean()
    std = x.std()
    if not std > 1e-12 * max(1.0, abs(mean)):
        raise DegenerateInputError("cannot standardize a zero-variance signal")
    z = (x - mean) / std
    # second pass removes the rounding residue so the map is idempotent
    z = (z - z.mean()) / z.std()
    return signal.replace(z)


def fit_length(samples: np.ndarray, length: int) -> np.ndarray:
    """Zero-pad at the tail or center-crop to exactly ``length`` samples."""
    n = samples.size
    if n == length:
        return samples.copy()
    if n < length:
        out = np.zeros(length)
        out[:n] = samples
        return out
    start = (n - length) // 2
    return samples[start:start + length].copy()


def canonicalize(signal: EcgSignal, rate: float = CANONICAL_RATE,
                 length: int = CANONICAL_LENGTH) -> EcgSignal:
    sig = resample(signal, rate)
    return sig.replace(fit_length(sig.samples, length))

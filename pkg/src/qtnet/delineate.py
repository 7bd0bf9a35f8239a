"""Classical QT/HR baseline: Pan-Tompkins R peaks and tangent-method T end."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal as sps

from .errors import DelineationFailureError, InsufficientBeatsError
from .signal import EcgSignal, IntervalLabels, remove_baseline_wander

REFRACTORY_S = 0.200
INTEGRATION_S = 0.150
QT_PLAUSIBLE_MS = (200.0, 700.0)


@dataclass
class Delineation:
    r_peaks: np.ndarray
    qrs_onsets: np.ndarray
    t_ends: np.ndarray
    qt_ms: float
    hr_bpm: float
    quality: float

    @property
    def labels(self) -> IntervalLabels:
        return IntervalLabels(qt_ms=self.qt_ms, hr_bpm=self.hr_bpm)


def _lowpass(x, rate, cutoff):
    cutoff = min(cutoff, 0.45 * rate)
    sos = sps.butter(2, cutoff, btype="lowpass", fs=rate, output="sos")
    return sps.sosfiltfilt(sos, x)


def _bandpass(x, rate, lo=5.0, hi=15.0):
    sos = sps.butter(2, [lo, min(hi, 0.45 * rate)], btype="bandpass", fs=rate, output="sos")
    return sps.sosfiltfilt(sos, x)


def _integrated_energy(x, rate):
    filtered = _bandpass(x, rate)
    # five-point derivative, then squaring and moving-window integration
    deriv = np.convolve(filtered, np.array([1.0, 2.0, 0.0, -2.0, -1.0]) * (rate / 8.0), mode="same")
    width = max(1, int(round(INTEGRATION_S * rate)))
    return deriv, np.convolve(deriv ** 2, np.ones(width) / width, mode="same")


def detect_r_peaks(signal: EcgSignal) -> np.ndarray:
    """Pan-Tompkins detection refined to the raw-signal maximum of each QRS.

    Thresholds adapt through running signal/noise peak levels; a searchback
    at half the threshold recovers beats missed after an RR gap of 1.66x
    the running mean RR.
    """
    rate = signal.sampling_rate
    if signal.duration < 2.0:
        raise InsufficientBeatsError("R-peak detection needs at least 2 s of signal")
    x = signal.samples - np.median(signal.samples)
    deriv, mwi = _integrated_energy(x, rate)
    if not np.max(mwi) > 0:
        raise InsufficientBeatsError("flat signal: no QRS energy")

    refractory = int(round(REFRACTORY_S * rate))
    half_win = int(round(INTEGRATION_S * rate / 2))

    def _max_slope(i):
        return np.max(np.abs(deriv[max(0, i - half_win):i + half_win + 1]))

    qrs_slope = [np.max(np.abs(deriv[: int(2 * rate)]))]

    def _is_t_wave(i):
        # P/T waves are far shallower than the running QRS slope
        return _max_slope(i) < 0.5 * np.mean(qrs_slope[-8:])

    candidates, _ = sps.find_peaks(mwi, distance=refractory)
    if candidates.size < 2:
        raise InsufficientBeatsError(f"found {candidates.size} QRS candidates")

    learn = mwi[: int(2 * rate)]
    spki = learn.max()
    npki = 0.5 * learn.mean()
    accepted = []
    rr_hist = []
    last_search = 0
    for idx in candidates:
        thr1 = npki + 0.25 * (spki - npki)
        if accepted and rr_hist:
            mean_rr = np.mean(rr_hist[-8:])
            if idx - accepted[-1] > 1.66 * mean_rr:
                lo = max(accepted[-1] + refractory, last_search)
                gap = candidates[(candidates > lo) & (candidates < idx - refractory)]
                gap = np.array([g for g in gap if not _is_t_wave(g)], dtype=np.int64)
                if gap.size:
                    best = gap[np.argmax(mwi[gap])]
                    if mwi[best] > 0.5 * thr1:
                        rr_hist.append(best - accepted[-1])
                        accepted.append(best)
                        qrs_slope.append(_max_slope(best))
                        spki = 0.25 * mwi[best] + 0.75 * spki
                last_search = idx
        if accepted and idx - accepted[-1] < refractory:
            continue
        if _is_t_wave(idx):
            npki = 0.125 * mwi[idx] + 0.875 * npki
            continue
        if mwi[idx] > thr1:
            if accepted:
                rr_hist.append(idx - accepted[-1])
            accepted.append(idx)
            qrs_slope.append(_max_slope(idx))
            spki = 0.125 * mwi[idx] + 0.875 * spki
        else:
            npki = 0.125 * mwi[idx] + 0.875 * npki

    half = int(round(0.075 * rate))
    peaks = []
    for idx in accepted:
        lo, hi = max(0, idx - half), min(x.size, idx + half + 1)
        p = lo + int(np.argmax(x[lo:hi]))
        if not peaks or p - peaks[-1] >= refractory:
            peaks.append(p)
    if len(peaks) < 2:
        raise InsufficientBeatsError(f"found {len(peaks)} R peaks")
    return np.asarray(peaks, dtype=np.int64)


def estimate_heart_rate(r_peaks, sampling_rate: float) -> float:
    r_peaks = np.asarray(r_peaks)
    if r_peaks.size < 2:
        raise InsufficientBeatsError("heart rate needs at least two R peaks")
    return 60.0 * sampling_rate / float(np.median(np.diff(r_peaks)))


def _qrs_onset(xs, r, rate):
    step = max(1, int(round(0.010 * rate)))
    lo = max(0, r - int(round(0.080 * rate)) - step)
    if r - lo < 2 * step:
        return None
    seg = xs[lo:r + 1]
    # slope over 10 ms, assigned to the start of each span
    slope = np.abs(seg[step:] - seg[:-step])
    peak_at = int(np.argmax(slope))
    peak = slope[peak_at]
    if not peak > 0:
        return None
    # walk back through the QRS activity, bridging short quiet gaps such as
    # the flat bottom of a Q wave
    active = np.nonzero(slope[:peak_at + 1] >= 0.1 * peak)[0]
    gap = max(1, int(round(0.016 * rate)))
    start = peak_at
    for a in active[::-1]:
        if start - a > gap:
            break
        start = a
    if start == 0:
        return None  # activity runs into the window edge
    return lo + int(start)


def _t_end(xt, r, next_r, baseline, rate, r_amp):
    start = r + int(round(0.100 * rate))
    stop = min(next_r - int(round(0.100 * rate)), xt.size)
    if stop - start < 3:
        return None
    dev = xt[start:stop] - baseline
    k = int(np.argmax(np.abs(dev)))
    if k == 0 or k == dev.size - 1:
        return None  # no interior T extremum
    if abs(dev[k]) < 0.05 * r_amp:
        return None
    t_peak = start + k
    sign = 1.0 if dev[k] > 0 else -1.0
    tail_stop = min(t_peak + int(round(0.250 * rate)), next_r - int(round(0.100 * rate)), xt.size - 1)
    if tail_stop - t_peak < 2:
        return None
    d = np.gradient(xt[t_peak:tail_stop + 1]) * sign
    m = int(np.argmin(d))
    slope = d[m] * sign
    if sign * slope >= 0:
        return None
    tm = t_peak + m
    return tm + (baseline - xt[tm]) / slope


def delineate_qt(signal: EcgSignal, r_peaks, sampling_rate: Optional[float] = None,
                 return_points: bool = False):
    """Median QT (ms) over beats whose onset-to-T-end distance is plausible.

    QRS onset: starting from the steepest 10 ms slope within 80 ms ahead of
    R, walk back while the slope magnitude stays above 10% of that peak,
    bridging quiet stretches of up to 16 ms (the Q trough). The first sample
    of the active run is the onset. T end is where the tangent at the
    steepest T descent crosses the isoelectric level measured just before
    QRS onset.
    """
    rate = signal.sampling_rate if sampling_rate is None else sampling_rate
    r_peaks = np.asarray(r_peaks, dtype=np.int64)
    if r_peaks.size < 2:
        raise InsufficientBeatsError("QT delineation needs at least two R peaks")
    x = signal.samples
    xs = _lowpass(x, rate, 40.0)
    xt = _lowpass(x, rate, 25.0)
    rr = int(np.median(np.diff(r_peaks)))
    iso = max(1, int(round(0.020 * rate)))

    onsets, ends, qts = [], [], []
    for i, r in enumerate(r_peaks):
        next_r = r_peaks[i + 1] if i + 1 < r_peaks.size else r + rr
        onset = _qrs_onset(xs, r, rate)
        if onset is None or onset - iso < 0:
            continue
        baseline = float(np.median(xs[onset - iso:onset + 1]))
        r_amp = abs(xs[r] - baseline)
        t_end = _t_end(xt, r, next_r, baseline, rate, r_amp)
        if t_end is None or t_end >= x.size:
            continue
        qt = (t_end - onset) * 1000.0 / rate
        if QT_PLAUSIBLE_MS[0] <= qt <= QT_PLAUSIBLE_MS[1]:
            onsets.append(onset)
            ends.append(t_end)
            qts.append(qt)
    if not qts:
        raise DelineationFailureError("no beat produced a plausible QT interval")
    qt_ms = float(np.median(qts))
    if return_points:
        return qt_ms, np.asarray(onsets), np.asarray(ends)
    return qt_ms


def _beat_matrix(x, r_peaks, rate):
    pre, post = int(round(0.2 * rate)), int(round(0.4 * rate))
    beats = [x[r - pre:r + post] for r in r_peaks if r - pre >= 0 and r + post <= x.size]
    return np.asarray(beats)


def signal_quality(signal: EcgSignal) -> float:
    """Fraction of beats correlating above 0.8 with the mean beat; 0 on failure."""
    try:
        r_peaks = detect_r_peaks(signal)
    except (InsufficientBeatsError, ValueError):
        return 0.0
    beats = _beat_matrix(signal.samples - np.median(signal.samples), r_peaks, signal.sampling_rate)
    if beats.shape[0] < 2:
        return 0.0
    template = beats.mean(axis=0)
    bc = beats - beats.mean(axis=1, keepdims=True)
    tc = template - template.mean()
    denom = np.sqrt((bc ** 2).sum(axis=1) * (tc ** 2).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, bc @ tc / denom, 0.0)
    return float(np.mean(corr > 0.8))


def delineate(signal: EcgSignal, baseline_window_s: float = 1.0) -> Delineation:
    """Full baseline pipeline: wander removal, R peaks, HR, QT and quality."""
    clean = remove_baseline_wander(signal, baseline_window_s)
    r_peaks = detect_r_peaks(clean)
    hr = estimate_heart_rate(r_peaks, clean.sampling_rate)
    qt, onsets, ends = delineate_qt(clean, r_peaks, return_points=True)
    return Delineation(r_peaks, onsets, ends, qt, hr, signal_quality(clean))


def delineator_estimator(record) -> IntervalLabels:
    """Adapter with the ``EcgRecord -> IntervalLabels`` estimator signature."""
    return delineate(record.signal).labels

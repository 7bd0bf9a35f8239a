"""Gaussian-bump single-lead ECG generator with exact QT/HR ground truth.

Each beat is the sum of five Gaussians (P, Q, R, S, T) positioned relative
to the R peak. QRS onset is where the Q bump has decayed to 5% of its
amplitude on its leading side, T end is where the T bump has decayed to 5%
on its trailing side; QT is the distance between them. The T centre is
derived from the requested QT, so QT varies only through T placement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize, stats

from .errors import InvalidArgumentError
from .signal import EcgRecord, EcgSignal, IntervalLabels

# distance from a Gaussian centre to its 5%-of-peak point, in widths
FIVE_PCT_WIDTHS = math.sqrt(2.0 * math.log(20.0))


@dataclass(frozen=True)
class Wave:
    amplitude: float   # mV
    center_ms: float   # offset from the R peak
    width_ms: float    # Gaussian standard deviation
    rise_width_ms: Optional[float] = None  # leading-side width when asymmetric

    def render(self, t, center_s):
        sigma = self.width_ms / 1000.0
        u = (t - center_s) / sigma
        if self.rise_width_ms is not None:
            u = np.where(t < center_s, (t - center_s) / (self.rise_width_ms / 1000.0), u)
        return self.amplitude * np.exp(-0.5 * u * u)

    @property
    def reach_s(self) -> float:
        return 6 * max(self.width_ms, self.rise_width_ms or 0.0) / 1000.0


DEFAULT_P = Wave(0.10, -175.0, 22.0)
DEFAULT_Q = Wave(-0.22, -26.0, 6.0)
DEFAULT_R = Wave(1.0, 0.0, 9.0)
DEFAULT_S = Wave(-0.25, 24.0, 7.0)


@dataclass(frozen=True)
class BeatParams:
    hr_bpm: float = 60.0
    qt_ms: float = 400.0
    t_amplitude: float = 0.3
    t_width_ms: float = 16.0
    t_rise_ratio: float = 2.0
    p: Wave = DEFAULT_P
    q: Wave = DEFAULT_Q
    r: Wave = DEFAULT_R
    s: Wave = DEFAULT_S
    noise_std: float = 0.0
    drift_amp: float = 0.0
    drift_freq: float = 0.2

    @property
    def rr_ms(self) -> float:
        return 60000.0 / self.hr_bpm

    @property
    def qrs_onset_ms(self) -> float:
        return self.q.center_ms - FIVE_PCT_WIDTHS * self.q.width_ms

    @property
    def t_center_ms(self) -> float:
        return self.qrs_onset_ms + self.qt_ms - FIVE_PCT_WIDTHS * self.t_width_ms

    @property
    def t_end_ms(self) -> float:
        return self.t_center_ms + FIVE_PCT_WIDTHS * self.t_width_ms

    @property
    def t(self) -> Wave:
        return Wave(self.t_amplitude, self.t_center_ms, self.t_width_ms,
                    self.t_rise_ratio * self.t_width_ms)

    def waves(self) -> Tuple[Wave, ...]:
        return (self.p, self.q, self.r, self.s, self.t)

    def validate(self) -> None:
        if not 30.0 <= self.hr_bpm <= 200.0:
            raise InvalidArgumentError(f"hr_bpm={self.hr_bpm} outside [30, 200]")
        if not 200.0 <= self.qt_ms <= 700.0:
            raise InvalidArgumentError(f"qt_ms={self.qt_ms} outside [200, 700]")
        if not self.qt_ms < self.rr_ms:
            raise InvalidArgumentError(
                f"qt_ms={self.qt_ms} must be shorter than the RR interval {self.rr_ms:.1f} ms")
        for name, wave in zip("PQRST", self.waves()):
            if not wave.width_ms > 0 or (wave.rise_width_ms is not None and not wave.rise_width_ms > 0):
                raise InvalidArgumentError(f"{name} wave width must be positive")
        if self.noise_std < 0 or self.drift_amp < 0 or self.drift_freq < 0:
            raise InvalidArgumentError("noise_std, drift_amp and drift_freq must be non-negative")


def analytic_qt(params: BeatParams) -> float:
    """QT re-measured from the placed wave centres."""
    return params.t_end_ms - params.qrs_onset_ms


def r_peak_times(params: BeatParams, duration_s: float, phase_s: float) -> np.ndarray:
    rr = params.rr_ms / 1000.0
    n = int(math.ceil((duration_s - phase_s) / rr))
    times = phase_s + rr * np.arange(n)
    return times[times < duration_s]


def synthesize(params: BeatParams, duration_s: float = 10.0, rate: float = 250.0,
               seed=None) -> Tuple[EcgSignal, IntervalLabels]:
    """Render a beat train and return it with its analytic labels.

    The R-peak phase, noise realisation and drift phase come from ``seed``;
    with ``seed=None`` the first R peak sits at 0.5 s and drift phase is 0.
    """
    params.validate()
    if not duration_s > 0 or not rate > 0:
        raise InvalidArgumentError("duration_s and rate must be positive")
    rng = np.random.default_rng(seed)
    rr = params.rr_ms / 1000.0
    if seed is None:
        phase, drift_phase = min(0.5, rr / 2), 0.0
    else:
        phase, drift_phase = rng.uniform(0.0, rr), rng.uniform(0.0, 2 * math.pi)

    n = int(round(duration_s * rate))
    t = np.arange(n) / rate
    x = np.zeros(n)
    # include neighbours so partial beats at both edges are rendered
    beats = phase + rr * np.arange(-2, int(math.ceil(duration_s / rr)) + 2)
    for wave in params.waves():
        if wave.amplitude == 0:
            continue
        reach = wave.reach_s
        for c in beats + wave.center_ms / 1000.0:
            lo = max(0, int((c - reach) * rate))
            hi = min(n, int((c + reach) * rate) + 2)
            if lo < hi:
                x[lo:hi] += wave.render(t[lo:hi], c)
    if params.drift_amp > 0:
        x += params.drift_amp * np.sin(2 * math.pi * params.drift_freq * t + drift_phase)
    if params.noise_std > 0:
        x += rng.normal(0.0, params.noise_std, size=n)

    labels = IntervalLabels(qt_ms=analytic_qt(params), hr_bpm=params.hr_bpm)
    return EcgSignal(x, rate, "I"), labels


@dataclass(frozen=True)
class CorpusSpec:
    n_records: int = 1000
    hr_mean: float = 77.0
    hr_std: float = 20.3
    qt_mean: float = 394.0
    qt_std: float = 50.0
    noise_range: Tuple[float, float] = (0.0, 0.1)
    drift_amp_range: Tuple[float, float] = (0.0, 0.3)
    drift_freq_range: Tuple[float, float] = (0.05, 0.5)
    t_amplitude_range: Tuple[float, float] = (0.15, 0.4)
    t_width_range: Tuple[float, float] = (12.0, 20.0)
    records_per_subject: int = 1
    duration_s: float = 10.0
    rate: float = 250.0
    rng_seed: int = 0
    id_prefix: str = "syn"

    def validate(self) -> None:
        if self.n_records < 0:
            raise InvalidArgumentError("n_records must be non-negative")
        if not self.hr_std > 0 or not self.qt_std > 0:
            raise InvalidArgumentError("distribution stds must be positive")
        if self.records_per_subject < 1:
            raise InvalidArgumentError("records_per_subject must be >= 1")
        for name in ("noise_range", "drift_amp_range", "drift_freq_range",
                     "t_amplitude_range", "t_width_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise InvalidArgumentError(f"{name} must satisfy 0 <= lo <= hi")

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusSpec":
        data = dict(data)
        for key, value in data.items():
            if isinstance(value, list):
                data[key] = tuple(value)
        return cls(**data)


def _truncated_normal(rng, mean, std, lo, hi):
    while True:
        v = rng.normal(mean, std)
        if lo <= v <= hi:
            return v


@lru_cache(maxsize=64)
def matched_normal(mean: float, std: float, lo: float, hi: float) -> Tuple[float, float]:
    """Parent (mu, sigma) whose truncation to [lo, hi] has the given mean and std."""
    def gap(p):
        mu, sigma = p[0], abs(p[1])
        m, v = stats.truncnorm.stats((lo - mu) / sigma, (hi - mu) / sigma, loc=mu, scale=sigma,
                                     moments="mv")
        return [m - mean, np.sqrt(v) - std]
    sol, _, ok, _ = optimize.fsolve(gap, [mean, std], full_output=True)
    if ok != 1:
        return mean, std
    return float(sol[0]), float(abs(sol[1]))


def draw_params(spec: CorpusSpec, rng: np.random.Generator) -> BeatParams:
    # HR is matched so the truncated draw keeps the requested moments; QT's
    # upper bound moves with RR, so it is drawn from the nominal normal
    mu, sigma = matched_normal(spec.hr_mean, spec.hr_std, 30.0, 200.0)
    hr = _truncated_normal(rng, mu, sigma, 30.0, 200.0)
    # QT must fit inside the RR interval; re-draw QT (not HR) when it does not
    qt = _truncated_normal(rng, spec.qt_mean, spec.qt_std, 200.0, min(700.0, 60000.0 / hr - 1e-6))
    return BeatParams(
        hr_bpm=hr,
        qt_ms=qt,
        t_amplitude=rng.uniform(*spec.t_amplitude_range),
        t_width_ms=rng.uniform(*spec.t_width_range),
        noise_std=rng.uniform(*spec.noise_range),
        drift_amp=rng.uniform(*spec.drift_amp_range),
        drift_freq=rng.uniform(*spec.drift_freq_range),
    )


def synth_record(spec: CorpusSpec, index: int) -> EcgRecord:
    rng = np.random.default_rng([spec.rng_seed, index])
    params = draw_params(spec, rng)
    sig, labels = synthesize(params, spec.duration_s, spec.rate, seed=[spec.rng_seed, index, 1])
    subject = index // spec.records_per_subject
    return EcgRecord(
        sig, labels,
        record_id=f"{spec.id_prefix}{index:06d}",
        subject_id=f"{spec.id_prefix}-s{subject:06d}",
        meta={"noise_std": params.noise_std, "t_amplitude": params.t_amplitude},
    )


def sample_corpus(spec: CorpusSpec) -> List[EcgRecord]:
    """Draw ``spec.n_records`` labelled records.

    Record ``i`` depends only on ``(rng_seed, i)``, so corpora can be built in
    pieces or in parallel and still match.
    """
    spec.validate()
    return [synth_record(spec, i) for i in range(spec.n_records)]

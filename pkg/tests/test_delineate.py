import numpy as np
import pytest

from qtnet.delineate import (delineate, delineate_qt, detect_r_peaks, estimate_heart_rate,
                             signal_quality)
from qtnet.errors import DelineationFailureError, InsufficientBeatsError
from qtnet.evaluate import evaluate_regression
from qtnet.signal import EcgSignal, IntervalLabels, remove_baseline_wander
from qtnet.synth import BeatParams, CorpusSpec, sample_corpus, synthesize

FALLBACK = IntervalLabels(qt_ms=394.0, hr_bpm=77.0)


def synth(**kw):
    seed = kw.pop("seed", 3)
    return synthesize(BeatParams(**kw), seed=seed)


class TestRPeaks:
    def test_60bpm(self):
        sig, _ = synth(hr_bpm=60, qt_ms=400)
        peaks = detect_r_peaks(sig)
        assert abs(len(peaks) - 10) <= 1
        assert np.all(np.abs(np.diff(peaks) - 250) <= 2)

    def test_120bpm(self):
        sig, _ = synth(hr_bpm=120, qt_ms=320)
        assert abs(len(detect_r_peaks(sig)) - 20) <= 1

    def test_flat_signal(self):
        with pytest.raises(InsufficientBeatsError):
            detect_r_peaks(EcgSignal(np.zeros(2500), 250.0))

    def test_too_short(self):
        with pytest.raises(InsufficientBeatsError):
            detect_r_peaks(EcgSignal(np.zeros(300), 250.0))

    @pytest.mark.parametrize("hr", [40, 55, 75, 95, 130, 170])
    def test_large_t_not_counted(self, hr):
        qt = min(420.0, 60000.0 / hr - 60.0)
        sig, _ = synth(hr_bpm=hr, qt_ms=qt, t_amplitude=0.4, seed=hr)
        assert abs(len(detect_r_peaks(sig)) - round(hr / 6)) <= 1

    def test_peaks_at_raw_maxima(self):
        sig, _ = synth(hr_bpm=72, qt_ms=380)
        x = sig.samples
        for p in detect_r_peaks(sig):
            lo, hi = max(0, p - 5), min(x.size, p + 6)
            assert x[p] == x[lo:hi].max()


class TestHeartRate:
    def test_even_spacing(self):
        assert estimate_heart_rate(np.arange(0, 2500, 250), 250.0) == 60.0
        assert estimate_heart_rate(np.arange(0, 2500, 125), 250.0) == 120.0

    def test_single_peak(self):
        with pytest.raises(InsufficientBeatsError):
            estimate_heart_rate([10], 250.0)

    @pytest.mark.parametrize("scale", [0.25, 3.0, 17.5])
    def test_scale_invariant(self, scale):
        sig, _ = synth(hr_bpm=83, qt_ms=370, noise_std=0.03)
        scaled = sig.replace(sig.samples * scale)
        a = delineate(sig).hr_bpm
        b = delineate(scaled).hr_bpm
        assert a == b


class TestQT:
    def test_noise_free(self):
        sig, _ = synth(hr_bpm=60, qt_ms=400)
        clean = remove_baseline_wander(sig)
        assert abs(delineate_qt(clean, detect_r_peaks(clean)) - 400.0) <= 10.0

    def test_noisy(self):
        sig, _ = synth(hr_bpm=60, qt_ms=400, noise_std=0.05, seed=11)
        assert abs(delineate(sig).qt_ms - 400.0) <= 25.0

    def test_no_t_wave(self):
        sig, _ = synth(hr_bpm=60, qt_ms=400, t_amplitude=0.0)
        with pytest.raises(DelineationFailureError):
            delineate(sig)

    def test_needs_two_peaks(self):
        sig, _ = synth(hr_bpm=60, qt_ms=400)
        with pytest.raises(InsufficientBeatsError):
            delineate_qt(sig, [100])

    def test_fiducial_order(self):
        sig, _ = synth(hr_bpm=75, qt_ms=390, noise_std=0.02)
        d = delineate(sig)
        assert np.all(np.diff(d.r_peaks) > 0)
        assert np.all(np.diff(d.qrs_onsets) > 0) and np.all(np.diff(d.t_ends) > 0)
        for on, end in zip(d.qrs_onsets, d.t_ends):
            r = d.r_peaks[np.searchsorted(d.r_peaks, on)]
            assert on < r < end

    def test_corpus_accuracy_noise_free(self):
        recs = sample_corpus(CorpusSpec(n_records=500, noise_range=(0.0, 0.0), rng_seed=7))
        report = evaluate_regression(lambda r: delineate(r.signal).labels, recs, FALLBACK)
        assert report.qt_mae_ms <= 15.0
        assert report.hr_mae_bpm <= 2.0


class TestQuality:
    def test_clean_high(self):
        sig, _ = synth(hr_bpm=70, qt_ms=400)
        assert signal_quality(sig) >= 0.9

    def test_white_noise_low(self):
        rng = np.random.default_rng(0)
        scores = [signal_quality(EcgSignal(rng.normal(size=2500), 250.0)) for _ in range(20)]
        assert max(scores) <= 0.3

    def test_flat_zero(self):
        assert signal_quality(EcgSignal(np.zeros(2500), 250.0)) == 0.0

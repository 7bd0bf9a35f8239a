import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtnet.errors import DegenerateInputError, InvalidArgumentError
from qtnet.signal import (EcgRecord, EcgSignal, IntervalLabels, canonicalize, fit_length,
                          remove_baseline_wander, resample, standardize_input)
from qtnet.synth import BeatParams, synthesize

from conftest import make_signal


class TestEcgSignal:
    def test_rejects_bad_rate(self):
        with pytest.raises(InvalidArgumentError):
            EcgSignal(np.ones(10), 0.0)

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(InvalidArgumentError):
            EcgSignal(np.array([]), 250.0)
        with pytest.raises(InvalidArgumentError):
            EcgSignal(np.array([0.0, np.nan]), 250.0)

    def test_samples_read_only(self):
        s = make_signal(np.zeros(5))
        with pytest.raises(ValueError):
            s.samples[0] = 1.0

    def test_labels_validate(self):
        with pytest.raises(InvalidArgumentError):
            IntervalLabels(qt_ms=0.0, hr_bpm=60.0)
        with pytest.raises(InvalidArgumentError):
            IntervalLabels(qt_ms=400.0, hr_bpm=60.0, qtc_ms=-1.0)

    def test_record_canonical_duration(self):
        rec = EcgRecord(make_signal(np.zeros(2000)))  # 8 s at 250 Hz, padded to 10 s
        assert len(rec.canonical().signal) == 2500
        short = EcgRecord(make_signal(np.zeros(2000)))
        with pytest.raises(InvalidArgumentError):
            short.canonical(length=2000)


class TestResample:
    def test_identity_at_equal_rate(self, rng):
        s = make_signal(rng.normal(size=300))
        out = resample(s, 250.0)
        assert np.array_equal(out.samples, s.samples)

    def test_constant_halved(self):
        s = make_signal(np.ones(1000), rate=500.0)
        out = resample(s, 250.0)
        assert len(out) == 500
        assert np.all(out.samples == 1.0)

    def test_ramp_upsampled_matches_line(self):
        t = np.arange(100) / 100.0
        out = resample(make_signal(t, rate=100.0), 200.0)
        expected = np.arange(200) / 200.0
        assert out.sampling_rate == 200.0
        assert np.allclose(out.samples, expected, atol=1e-12)

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(InvalidArgumentError):
            resample(make_signal(np.ones(10)), 0.0)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 3000), rate=st.floats(50, 1000), target=st.floats(50, 1000))
    def test_duration_preserved(self, n, rate, target):
        s = make_signal(np.zeros(n), rate=rate)
        out = resample(s, target)
        assert abs(len(out) / target - n / rate) <= 1.0 / target + 1e-12

    @settings(max_examples=60, deadline=None)
    @given(a=st.floats(-5, 5), b=st.floats(-5, 5), rate=st.floats(50, 600), target=st.floats(50, 600))
    def test_linear_exact(self, a, b, rate, target):
        n = 200
        s = make_signal(a + b * np.arange(n) / rate, rate=rate)
        out = resample(s, target)
        t = np.arange(len(out)) / target
        assert np.allclose(out.samples, a + b * t, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(2, 500))
    def test_idempotent_at_equal_rate(self, n):
        s = make_signal(np.sin(np.arange(n)))
        assert np.array_equal(resample(resample(s, 250.0), 250.0).samples, s.samples)


class TestBaselineWander:
    def test_dc_offset_removed(self):
        out = remove_baseline_wander(make_signal(np.full(2500, 0.5)), 1.0)
        assert np.all(out.samples[250:-250] == 0.0)

    def test_zero_stays_zero(self):
        assert np.all(remove_baseline_wander(make_signal(np.zeros(1000))).samples == 0.0)

    def test_window_covering_signal_rejected(self):
        with pytest.raises(InvalidArgumentError):
            remove_baseline_wander(make_signal(np.zeros(200)), 1.0)

    def test_rejects_nonpositive_window(self):
        with pytest.raises(InvalidArgumentError):
            remove_baseline_wander(make_signal(np.zeros(2500)), 0.0)

    def test_drift_removed(self):
        clean, _ = synthesize(BeatParams(hr_bpm=70, qt_ms=390), seed=4)
        drifted, _ = synthesize(BeatParams(hr_bpm=70, qt_ms=390, drift_amp=0.1, drift_freq=0.2), seed=4)
        a = remove_baseline_wander(clean).samples
        b = remove_baseline_wander(drifted).samples
        assert np.max(np.abs(a - b)[250:-250]) < 0.05

    def test_zero_mean_ecg_nearly_unchanged(self):
        sig, _ = synthesize(BeatParams(hr_bpm=72, qt_ms=400), seed=1)
        x = sig.samples - np.median(sig.samples)
        out = remove_baseline_wander(sig.replace(x)).samples
        rms = np.sqrt(np.mean((out - x)[250:-250] ** 2))
        assert rms < 0.02


class TestStandardize:
    def test_hand_values(self):
        out = standardize_input(make_signal([0.0, 1.0, 2.0, 3.0]))
        assert np.allclose(out.samples, [-1.3416, -0.4472, 0.4472, 1.3416], atol=1e-4)

    def test_alternating(self):
        out = standardize_input(make_signal(np.tile([-1.0, 1.0], 50)))
        assert np.allclose(out.samples, np.tile([-1.0, 1.0], 50))

    def test_constant_rejected(self):
        with pytest.raises(DegenerateInputError):
            standardize_input(make_signal(np.full(10, 3.0)))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=400))
    def test_idempotent_and_moments(self, values):
        x = np.array(values)
        if x.std() < 1e-6:
            return
        once = standardize_input(make_signal(x))
        twice = standardize_input(once)
        assert abs(once.samples.mean()) < 1e-9
        assert abs(once.samples.std() - 1.0) < 1e-9
        assert np.allclose(once.samples, twice.samples, atol=1e-9)


class TestCanonicalize:
    def test_pad_and_crop(self):
        assert np.array_equal(fit_length(np.arange(3.0), 5), [0, 1, 2, 0, 0])
        assert np.array_equal(fit_length(np.arange(6.0), 4), [1, 2, 3, 4])

    def test_resample_then_length(self):
        s = make_signal(np.zeros(5000), rate=500.0)
        out = canonicalize(s)
        assert out.sampling_rate == 250.0 and len(out) == 2500

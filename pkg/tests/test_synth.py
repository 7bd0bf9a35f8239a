import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from qtnet.delineate import delineate
from qtnet.errors import InvalidArgumentError
from qtnet.synth import (FIVE_PCT_WIDTHS, BeatParams, CorpusSpec, analytic_qt, sample_corpus,
                         synthesize)


def measured_qt(params, rate=20000.0):
    """QT read off finely rendered Q and T waves at their 5% crossings."""
    t = np.arange(-0.3, 1.2, 1.0 / rate)
    q = params.q.render(t, params.q.center_ms / 1000.0)
    tw = params.t.render(t, params.t.center_ms / 1000.0)
    onset = t[np.argmax(np.abs(q) >= 0.05 * abs(params.q.amplitude))]
    above = np.nonzero(np.abs(tw) >= 0.05 * abs(params.t_amplitude))[0]
    end = t[above[-1]]
    return (end - onset) * 1000.0


def r_peaks(sig):
    idx, _ = find_peaks(sig.samples, height=0.6)
    return idx


class TestSynthesize:
    def test_hr60_spacing_and_labels(self):
        sig, lab = synthesize(BeatParams(hr_bpm=60, qt_ms=400))
        assert lab.qt_ms == pytest.approx(400.0)
        assert lab.hr_bpm == 60.0
        assert np.all(np.diff(r_peaks(sig)) == 250)

    def test_qt_not_shorter_than_rr_rejected(self):
        with pytest.raises(InvalidArgumentError, match="RR"):
            synthesize(BeatParams(hr_bpm=120, qt_ms=700))

    @pytest.mark.parametrize("field,value", [("hr_bpm", 20.0), ("hr_bpm", 220.0),
                                             ("qt_ms", 150.0), ("qt_ms", 750.0),
                                             ("t_width_ms", 0.0), ("noise_std", -0.1)])
    def test_invariant_bounds(self, field, value):
        base = dict(hr_bpm=60.0, qt_ms=400.0)
        base[field] = value
        with pytest.raises(InvalidArgumentError):
            synthesize(BeatParams(**base))

    def test_delineator_cross_check(self):
        sig, _ = synthesize(BeatParams(hr_bpm=80, qt_ms=380), seed=5)
        assert abs(delineate(sig).qt_ms - 380.0) <= 10.0

    def test_deterministic(self):
        p = BeatParams(hr_bpm=71, qt_ms=410, noise_std=0.05, drift_amp=0.2)
        a, _ = synthesize(p, seed=9)
        b, _ = synthesize(p, seed=9)
        assert np.array_equal(a.samples, b.samples)

    @settings(max_examples=40, deadline=None)
    @given(hr=st.floats(30, 200), frac=st.floats(0, 1), tw=st.floats(10, 24))
    def test_analytic_qt_matches_rendering(self, hr, frac, tw):
        qt_max = min(700.0, 60000.0 / hr - 1.0)
        if qt_max < 200.0:
            return
        qt = 200.0 + frac * (qt_max - 200.0)
        p = BeatParams(hr_bpm=hr, qt_ms=qt, t_width_ms=tw)
        assert abs(analytic_qt(p) - qt) < 1e-9
        assert abs(measured_qt(p) - qt) <= 2.0

    @settings(max_examples=40, deadline=None)
    @given(hr=st.floats(30, 200), seed=st.integers(0, 10_000))
    def test_r_peak_count(self, hr, seed):
        qt = min(400.0, 60000.0 / hr - 50.0)
        if qt < 200.0:
            qt = 200.0
        sig, _ = synthesize(BeatParams(hr_bpm=hr, qt_ms=qt), seed=seed)
        assert abs(len(r_peaks(sig)) - round(hr / 6.0)) <= 1

    def test_five_percent_constant(self):
        assert np.exp(-0.5 * FIVE_PCT_WIDTHS ** 2) == pytest.approx(0.05)


class TestCorpus:
    def test_empty(self):
        assert sample_corpus(CorpusSpec(n_records=0)) == []

    def test_reproducible(self):
        spec = CorpusSpec(n_records=50, rng_seed=7)
        a, b = sample_corpus(spec), sample_corpus(spec)
        assert all(np.array_equal(x.signal.samples, y.signal.samples) for x, y in zip(a, b))
        assert [x.labels for x in a] == [y.labels for y in b]

    def test_records_independent_of_corpus_size(self):
        small = sample_corpus(CorpusSpec(n_records=5, rng_seed=3))
        large = sample_corpus(CorpusSpec(n_records=9, rng_seed=3))
        assert np.array_equal(small[4].signal.samples, large[4].signal.samples)

    def test_label_moments(self):
        # only labels are needed for the moment check
        spec = CorpusSpec(n_records=2000, rng_seed=7)
        recs = sample_corpus(spec)
        qt = np.array([r.labels.qt_ms for r in recs])
        hr = np.array([r.labels.hr_bpm for r in recs])
        assert abs(qt.mean() - 394.0) <= 10.0
        assert abs(qt.std() - 50.0) <= 5.0
        assert abs(hr.mean() - 77.0) <= 0.05 * 77.0
        assert abs(hr.std() - 20.3) <= 0.05 * 20.3

    def test_labels_respect_bounds(self):
        for r in sample_corpus(CorpusSpec(n_records=300, rng_seed=1)):
            assert 200.0 <= r.labels.qt_ms <= 700.0
            assert 30.0 <= r.labels.hr_bpm <= 200.0
            assert r.labels.qt_ms < 60000.0 / r.labels.hr_bpm

    def test_invalid_spec(self):
        with pytest.raises(InvalidArgumentError):
            sample_corpus(CorpusSpec(n_records=-1))
        with pytest.raises(InvalidArgumentError):
            sample_corpus(CorpusSpec(noise_range=(0.2, 0.1)))

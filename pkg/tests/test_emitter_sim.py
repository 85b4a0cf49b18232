import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpbench.emitter_sim import (
    CW, Blinking, ConfigurationWarning, DetectionConfig, EmissionEvents, EmitterModel,
    LineShape, Pulsed, apply_detection, simulate_emission, simulate_spectrum, simulate_stream,
)
from qpbench.errors import ParameterError
from qpbench.records import PhotonStream


def quiet(**kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConfigurationWarning)
        return EmitterModel(**kw)


class TestModel:
    def test_short_period_warns(self):
        with pytest.warns(ConfigurationWarning):
            EmitterModel(Pulsed(10.0, 80.0), lifetime=20.0)

    def test_long_period_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            EmitterModel(Pulsed(1.0, 80.0), lifetime=20.0)

    @pytest.mark.parametrize("kw", [dict(lifetime=0), dict(multiphoton_prob=1.5),
                                    dict(quantum_efficiency=-0.1),
                                    dict(blinking=Blinking(0.0, 1.0)),
                                    dict(excitation=Pulsed(0.0, 1.0))])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            quiet(**kw)

    def test_detection_invalid(self):
        with pytest.raises(ParameterError):
            DetectionConfig(split_ratio=1.2)
        with pytest.raises(ParameterError):
            DetectionConfig(router_dead_time=-1)

    def test_line_shape(self):
        with pytest.raises(ParameterError):
            LineShape(shape="voigt")
        for shape in ("gaussian", "lorentzian"):
            ls = LineShape(518.0, 16.0, shape)
            assert ls.cdf(518.0) == pytest.approx(0.5)


class TestEmission:
    def test_deterministic(self):
        m = EmitterModel(Pulsed(1.0, 40.0), blinking=Blinking(5, 5), multiphoton_prob=0.1)
        a = simulate_emission(m, 0.05, 3)
        b = simulate_emission(m, 0.05, 3)
        assert np.array_equal(a.times, b.times)
        assert not np.array_equal(a.times, simulate_emission(m, 0.05, 4).times)

    def test_one_photon_per_pulse(self):
        m = EmitterModel(Pulsed(1.0, 500.0), lifetime=5.0)
        ev = simulate_emission(m, 0.05, 1)
        pulse = ev.times // int(ev.pulse_period)
        assert np.unique(pulse).size == pulse.size
        # photons trail their pulse by the exponential delay
        assert np.all(ev.times - pulse * int(ev.pulse_period) < ev.pulse_period)

    def test_multiphoton_gives_pairs(self):
        m = EmitterModel(Pulsed(1.0, 500.0), lifetime=5.0, multiphoton_prob=0.5)
        ev = simulate_emission(m, 0.02, 1)
        pulse = ev.times // int(ev.pulse_period)
        assert np.unique(pulse).size < pulse.size

    def test_sorted_and_inside(self):
        m = EmitterModel(CW(40.0), lifetime=10.0, blinking=Blinking(2, 3), multiphoton_prob=0.2)
        ev = simulate_emission(m, 0.01, 2)
        assert np.all(np.diff(ev.times) >= 0)
        assert ev.times[0] >= 0 and ev.times[-1] < ev.duration

    def test_zero_power_empty(self):
        ev = simulate_emission(EmitterModel(Pulsed(1.0, 0.0)), 0.1, 0)
        assert ev.times.size == 0

    def test_invalid_duration(self):
        with pytest.raises(ParameterError):
            simulate_emission(EmitterModel(Pulsed(1.0, 1.0)), 0.0, 0)

    @pytest.mark.parametrize("power", [5.0, 80.0, 640.0])
    def test_pulsed_rate_vs_power(self, power):
        m = EmitterModel(Pulsed(1.0, power), lifetime=20.0, quantum_efficiency=0.5)
        T = 10.0
        n = simulate_emission(m, T, 11).times.size
        s = power / 80.0
        expected = 1e6 * T * 0.5 * s / (1 + s)
        assert abs(n - expected) < 3 * np.sqrt(expected)
        assert m.expected_rate() * T == pytest.approx(expected)

    @pytest.mark.parametrize("power", [8.0, 80.0, 400.0])
    def test_cw_rate_vs_power(self, power):
        tau = 20.0
        m = EmitterModel(CW(power), lifetime=tau)
        T = 2.0
        n = simulate_emission(m, T, 5).times.size
        s = power / 80.0
        expected = T / (tau * 1e-9) * s / (1 + s)
        # renewal counts are sub-Poissonian, so the Poisson sigma is conservative
        assert abs(n - expected) < 3 * np.sqrt(expected)

    def test_cw_dead_interval(self):
        m = EmitterModel(CW(800.0), lifetime=10.0)
        t = simulate_emission(m, 0.01, 0).times
        assert np.diff(t).min() >= 10_000 - 1

    def test_blinking_half_duty(self):
        base = EmitterModel(Pulsed(1.0, 80.0))
        blink = EmitterModel(Pulsed(1.0, 80.0), blinking=Blinking(5.0, 5.0))
        T = 10.0
        n = simulate_emission(blink, T, 9).times.size
        r0 = base.expected_rate() * T
        expected = 0.5 * r0
        # Poisson sigma plus the telegraph duty-cycle spread
        # var(on fraction) = 2 p (1 - p) tau_c / T, tau_c = on*off/(on+off)
        tel = np.sqrt(2 * 0.25 * 2.5e-6 / T) * r0
        assert abs(n - expected) < 3 * np.hypot(np.sqrt(expected), tel)


class TestDetection:
    def test_router_drops_close_pair(self):
        ev = EmissionEvents(np.array([0, 50_000], dtype=np.int64), 1_000_000)
        det = DetectionConfig(router_dead_time=100.0)
        for seed in range(10):
            assert len(apply_detection(ev, det, seed)) == 1

    def test_router_keeps_separated_pair(self):
        ev = EmissionEvents(np.array([0, 150_000], dtype=np.int64), 1_000_000)
        assert len(apply_detection(ev, DetectionConfig(router_dead_time=100.0), 0)) == 2

    def test_detector_dead_time_per_channel(self):
        ev = EmissionEvents(np.array([0, 50_000], dtype=np.int64), 1_000_000)
        det = DetectionConfig(split_ratio=1.0, router_dead_time=0.0, detector_dead_time=80.0)
        assert len(apply_detection(ev, det, 0)) == 1
        det = DetectionConfig(split_ratio=1.0, router_dead_time=0.0, detector_dead_time=20.0)
        assert len(apply_detection(ev, det, 0)) == 2

    def test_empty(self):
        m = EmitterModel(Pulsed(1.0, 80.0))
        s = simulate_stream(m, DetectionConfig(detection_efficiency=0.0), 0.01, 0)
        assert len(s) == 0
        assert s.duration == 10 ** 10

    def test_split_ratio(self):
        m = EmitterModel(Pulsed(1.0, 80.0))
        s = simulate_stream(m, DetectionConfig(split_ratio=0.3, router_dead_time=0.0), 0.1, 0)
        n = len(s)
        assert abs(s.a.size - 0.3 * n) < 4 * np.sqrt(n * 0.21)

    def test_background_rate(self):
        ev = EmissionEvents(np.zeros(0, dtype=np.int64), 10 ** 12)
        det = DetectionConfig(background_rate=1e4, router_dead_time=0.0)
        s = apply_detection(ev, det, 0)
        for t in (s.a, s.b):
            assert abs(t.size - 1e4) < 4 * 100

    def test_deterministic(self):
        m = EmitterModel(Pulsed(1.0, 80.0), blinking=Blinking(1, 1))
        det = DetectionConfig(background_rate=1e3, timing_jitter_sigma=300.0)
        a = simulate_stream(m, det, 0.02, 5)
        b = simulate_stream(m, det, 0.02, 5)
        assert np.array_equal(a.timestamp, b.timestamp)
        assert np.array_equal(a.channel, b.channel)

    @settings(max_examples=25, deadline=None)
    @given(router=st.floats(0, 500), det_dead=st.floats(0, 500),
           jitter=st.floats(0, 2000), bg=st.floats(0, 1e5), seed=st.integers(0, 2 ** 31))
    def test_stream_invariants(self, router, det_dead, jitter, bg, seed):
        m = EmitterModel(Pulsed(2.0, 200.0), lifetime=5.0, multiphoton_prob=0.3)
        det = DetectionConfig(router_dead_time=router, detector_dead_time=det_dead,
                              timing_jitter_sigma=jitter, background_rate=bg)
        s = simulate_stream(m, det, 0.005, seed)
        s.validate()
        gaps = np.diff(s.timestamp)
        if gaps.size:
            assert gaps.min() >= round(router * 1000)
        for t in (s.a, s.b):
            if t.size > 1:
                assert np.diff(t).min() >= max(1, round(det_dead * 1000))


class TestSpectrum:
    def test_deterministic(self):
        m = EmitterModel()
        bins = np.arange(450, 590, 1.0)
        a = simulate_spectrum(m, 10_000, bins, 1)
        assert np.array_equal(a.counts, simulate_spectrum(m, 10_000, bins, 1).counts)
        assert a.counts.sum() == 10_000

    def test_fwhm_large_counts(self):
        m = EmitterModel()
        bins = np.arange(440.0, 596.0, 0.1)
        sp = simulate_spectrum(m, 10 ** 7, bins, 0)
        # half-maximum crossings of a lightly smoothed histogram, linearly interpolated
        y = np.convolve(sp.counts, np.ones(11) / 11, mode="same")
        half = y.max() / 2
        above = np.flatnonzero(y >= half)
        i, j = above[0], above[-1]
        x = sp.wavelength
        left = np.interp(half, [y[i - 1], y[i]], [x[i - 1], x[i]])
        right = np.interp(half, [y[j + 1], y[j]], [x[j + 1], x[j]])
        assert right - left == pytest.approx(16.0, rel=0.02)

    def test_delta_line_single_bin(self):
        m = EmitterModel(spectrum=LineShape(518.0, 1e-4))
        bins = np.arange(510.0, 526.5, 1.0)
        sp = simulate_spectrum(m, 5000, bins, 0)
        assert np.count_nonzero(sp.counts) == 1
        assert sp.wavelength[np.argmax(sp.counts)] == 518.0

    def test_narrow_grid_warns(self):
        with pytest.warns(ConfigurationWarning):
            simulate_spectrum(EmitterModel(), 100, np.arange(500, 536, 1.0), 0)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            simulate_spectrum(EmitterModel(), 0, np.arange(450, 590, 1.0), 0)


class TestRecords:
    def test_validate_unsorted(self):
        from qpbench.errors import DataError
        with pytest.raises(DataError, match="records 1 and 2"):
            PhotonStream([0, 1, 0], [5, 9, 7]).validate()

    def test_validate_channel(self):
        from qpbench.errors import DataError
        with pytest.raises(DataError, match="channel 2"):
            PhotonStream([0, 2], [1, 2]).validate()

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mcdist.channel import ChannelParams, SampledSignal, SensorConfig, diffusion_flow_concentration, simulate_received_signal
from mcdist.errors import DegenerateEdge, DomainError, NoDetection, NoPeak
from mcdist.features import (
    ExtractionConfig,
    detect,
    detection_threshold,
    estimate_offset,
    extract_features,
    find_first_peak,
    find_preceding_local_min,
    moving_average,
    received_energy,
    reference_indices,
    reference_points,
    smooth,
)
from oracles import grid_argmax, naive_moving_average

D_FIG1 = 0.1149980886
V_FIG1 = 23.53

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def sig(values, dt=0.1):
    return SampledSignal(np.asarray(values, dtype=float), dt)


@pytest.fixture(scope="module")
def fig1_signal():
    ch = ChannelParams(released_quantity=50.0)
    sens = SensorConfig(quantizer_bits=0, record_duration=20.0, offset_level=0.5)
    return simulate_received_signal(ch, sens, "flow", 100.0, 1.0, seed=0)


class TestOffsetAndThreshold:
    def test_constant_prefix(self):
        assert estimate_offset(sig([1.0] * 8), 5) == 1.0

    def test_ramp_prefix(self):
        assert estimate_offset(sig([1, 2, 3, 4, 5, 9, 9]), 5) == 3.0

    @given(c=finite, p=st.integers(1, 20))
    def test_constant_signal(self, c, p):
        assert estimate_offset(sig([c] * 20), p) == pytest.approx(c, rel=1e-15, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(DomainError):
            estimate_offset(sig([1.0, 2.0]), 5)

    def test_threshold(self):
        assert detection_threshold(0.5, 0.1) == pytest.approx(0.6)
        assert detection_threshold(0.0, 0.0) == 0.0

    @given(a=finite, delta=finite, thr=st.floats(0, 10))
    def test_threshold_additive(self, a, delta, thr):
        assert detection_threshold(a + delta, thr) == pytest.approx(detection_threshold(a, thr) + delta, abs=1e-9)


class TestSmoothing:
    def test_constant_preserved(self):
        out = moving_average(np.full(12, 2.5), 3, 3)
        assert np.all(out == 2.5)

    def test_impulse_plateau(self):
        x = np.zeros(21)
        x[10] = 1.0
        out = moving_average(x, 3, 3)
        assert np.allclose(out[7:14], 1 / 7, rtol=1e-15)
        assert np.all(out[:7] == 0) and np.all(out[14:] == 0)

    @given(x=arrays(float, st.integers(8, 60), elements=finite), w1=st.integers(0, 3), w2=st.integers(0, 3))
    def test_matches_loop_oracle(self, x, w1, w2):
        assert np.allclose(moving_average(x, w1, w2), naive_moving_average(x, w1, w2), rtol=1e-12, atol=1e-9)

    @given(x=arrays(float, st.integers(7, 60), elements=finite))
    def test_bounded_by_input(self, x):
        out = moving_average(x, 3, 3)
        assert out.max() <= x.max() and out.min() >= x.min()

    def test_window_too_long(self):
        with pytest.raises(DomainError):
            moving_average(np.ones(5), 3, 3)

    def test_smooth_keeps_metadata(self):
        s = SampledSignal(np.arange(10.0), 0.5, 1.0, "t1", 0.25, 120.0)
        out = smooth(s, 1, 1)
        assert (out.dt, out.t0, out.trial_id, out.true_distance) == (0.5, 1.0, "t1", 120.0)


class TestDetection:
    def test_equal_to_threshold_is_not_detected(self):
        assert detect(sig([0.6] * 10), 0.6) is False

    def test_just_above(self):
        assert detect(sig([0.6] * 9 + [0.6 + 1e-12]), 0.6) is True

    @given(x=arrays(float, st.integers(1, 40), elements=finite), k=finite, drop=st.floats(0, 100))
    def test_lowering_threshold_is_monotone(self, x, k, drop):
        if detect(sig(x), k):
            assert detect(sig(x), k - drop)


class TestPeaks:
    def test_simple_peak(self):
        assert find_first_peak(sig([0, 1, 2, 1, 0])) == 2

    def test_plateau_takes_last_sample(self):
        assert find_first_peak(sig([0, 1, 2, 2, 1])) == 3

    def test_increasing_has_no_peak(self):
        with pytest.raises(NoPeak):
            find_first_peak(sig([0, 1, 2, 3, 4]))

    def test_first_of_two_peaks(self):
        assert find_first_peak(sig([0, 3, 1, 5, 0])) == 1

    def test_search_start(self):
        assert find_first_peak(sig([0, 3, 1, 5, 0]), start=2) == 3

    def test_local_min(self):
        assert find_preceding_local_min(sig([3, 1, 2, 5]), 3) == 1

    def test_local_min_fallback(self):
        assert find_preceding_local_min(sig([0, 1, 2, 3]), 3) == 0

    def test_local_min_crosses_flat_stretch(self):
        assert find_preceding_local_min(sig([2, 0, 0, 0, 1, 3]), 5) == 1

    @given(
        rise=st.integers(2, 40),
        fall=st.integers(1, 40),
        scale=st.floats(0.1, 10),
        base=st.integers(0, 10),
    )
    def test_unimodal_peak_is_global_argmax(self, rise, fall, scale, base):
        x = np.concatenate(
            [np.zeros(base), scale * np.sqrt(np.arange(1, rise + 1)), scale * math.sqrt(rise) * np.exp(-np.arange(1, fall + 1) / 3)]
        )
        s = sig(x)
        peak = find_first_peak(s)
        assert peak == int(np.argmax(x))
        assert find_preceding_local_min(s, peak) < peak


class TestReferencePoints:
    def test_indices(self):
        assert reference_indices(0, 10) == (1, 9)

    def test_round_half_up(self):
        # 0.1 * 15 = 1.5 -> 2 ; 0.9 * 15 = 13.5 -> 14
        assert reference_indices(0, 15) == (2, 14)
        assert reference_indices(5, 20) == (7, 19)

    @pytest.mark.parametrize("lo,hi", [(0, 1), (0, 4), (3, 3), (5, 2)])
    def test_degenerate(self, lo, hi):
        with pytest.raises(DegenerateEdge):
            reference_indices(lo, hi)

    def test_points_on_rising_edge(self):
        s = SampledSignal(np.linspace(0, 1, 11) ** 2, 0.5)
        t_low, c_low, t_high, c_high = reference_points(s, 0, 10)
        assert (t_low, t_high) == (0.5, 4.5)
        assert c_high >= c_low


class TestEnergy:
    def test_flat(self):
        assert received_energy(sig([0.3] * 6), 0.3, 6) == 0.0

    def test_two_samples(self):
        assert received_energy(sig([1.5, 2.5, 9.0]), 0.5, 2) == pytest.approx(5.0)

    def test_too_long(self):
        with pytest.raises(DomainError):
            received_energy(sig([1.0, 2.0]), 0.0, 3)

    @given(x=arrays(float, st.integers(1, 50), elements=st.floats(-10, 10)), a=st.floats(-10, 10), c=st.floats(-100, 100))
    def test_shift_invariance(self, x, a, c):
        n = x.size
        assert received_energy(sig(x + c), a + c, n) == pytest.approx(received_energy(sig(x), a, n), rel=1e-9, abs=1e-9)


class TestExtraction:
    def test_flat_signal_not_detected(self):
        with pytest.raises(NoDetection):
            extract_features(sig([0.5] * 100), T_e=0.5)

    def test_fig1_peak_time(self, fig1_signal):
        f = extract_features(fig1_signal, T_e=1.0)
        t_ref = grid_argmax(lambda t: diffusion_flow_concentration(1.0, D_FIG1, 100.0, V_FIG1, t), 1e-4, 20.0, 1e-4)
        assert abs(f.t_peak - t_ref) <= fig1_signal.dt

    def test_gradient_definition(self, fig1_signal):
        f = extract_features(fig1_signal, T_e=1.0)
        assert f.gradient == f.delta_c / f.rise_time
        assert f.rise_time > 0 and f.delta_c > 0

    def test_ordering_and_energy_count(self, fig1_signal):
        f = extract_features(fig1_signal, T_e=1.0)
        assert f.t_low < f.t_peak
        assert f.n_r == round(f.t_peak / fig1_signal.dt) + 1
        assert f.received_power == f.energy / f.n_r

    def test_deterministic(self, fig1_signal):
        assert extract_features(fig1_signal) == extract_features(fig1_signal)

    def test_emission_time_from_signal(self):
        s = SampledSignal(np.concatenate([np.zeros(10), np.hanning(40), np.zeros(10)]), 0.1, emission_time=0.75)
        assert extract_features(s).emission_time == 0.75

    def test_no_peak_when_still_rising(self):
        s = sig(np.concatenate([np.zeros(10), np.linspace(0, 2, 30)]))
        with pytest.raises(NoPeak):
            extract_features(s, T_e=0.5)

    def test_short_edge_is_degenerate(self):
        x = np.full(40, 0.5)
        x[19:22] = [0.0, 3.0, 0.5]
        cfg = ExtractionConfig(window_before=0, window_after=0)
        with pytest.raises(DegenerateEdge):
            extract_features(sig(x), cfg, T_e=0.5)

    def test_pre_arrival_ripple_ignored(self):
        # a bump below the threshold must not be taken as the first peak
        x = np.zeros(80)
        x[10:13] = [0.02, 0.05, 0.02]
        x[30:71] = 2.0 * np.hanning(41)
        cfg = ExtractionConfig(window_before=0, window_after=0)
        f = extract_features(sig(x), cfg, T_e=0.5)
        assert f.t_peak == pytest.approx(5.0)

    @given(
        a=st.floats(0.5, 5.0),
        width=st.integers(20, 60),
        offset=st.floats(0.0, 1.0),
        start=st.integers(6, 30),
    )
    def test_feature_invariants(self, a, width, offset, start):
        x = np.full(start + width + 30, offset)
        x[start : start + width] += a * np.hanning(width)
        f = extract_features(sig(x), T_e=0.25)
        assert f.rise_time > 0
        assert math.isclose(f.gradient * f.rise_time, f.delta_c, rel_tol=1e-12, abs_tol=1e-15)
        assert f.t_low + f.rise_time <= f.t_peak + 1e-12

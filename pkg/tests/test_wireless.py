import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedsim import wireless
from fedsim.wireless import ChannelDraw, LinkBudget


BUDGET = LinkBudget()


class TestUnits:
    def test_dbm_to_watts_anchors(self):
        assert wireless.dbm_to_watts(30.0) == pytest.approx(1.0)
        assert wireless.dbm_to_watts(0.0) == pytest.approx(1e-3)
        assert wireless.dbm_to_watts(-30.0) == pytest.approx(1e-6)

    def test_default_budget_properties(self):
        assert BUDGET.tx_power_w == pytest.approx(1.0)
        assert BUDGET.noise_psd_w_hz == pytest.approx(10 ** (-14.3) / 1e3)

    def test_budget_rejects_nonpositive_bandwidth(self):
        with pytest.raises(ValueError):
            LinkBudget(total_bandwidth_hz=0.0)


class TestChannel:
    def test_pathloss_scales_with_inverse_square(self):
        rng_a = np.random.default_rng(1)
        rng_b = np.random.default_rng(1)
        near = wireless.sample_channel(100.0, BUDGET, rng_a)
        far = wireless.sample_channel(200.0, BUDGET, rng_b)
        # identical fading draws, so the ratio is purely path loss
        assert near.gain / far.gain == pytest.approx(4.0)

    def test_fading_is_unit_mean_exponential(self):
        rng = np.random.default_rng(2)
        n = 20_000
        gains = np.array([wireless.sample_channel(100.0, BUDGET, rng).gain
                          for _ in range(n)])
        pathloss = 1e-3 * 100.0 ** -2
        scaled = gains / pathloss
        assert scaled.mean() == pytest.approx(1.0, abs=0.03)
        assert scaled.std() == pytest.approx(1.0, abs=0.05)

    def test_rejects_bad_distance_and_gain(self):
        with pytest.raises(ValueError):
            wireless.sample_channel(0.0, BUDGET, np.random.default_rng(0))
        with pytest.raises(ValueError):
            ChannelDraw(distance_m=10.0, gain=0.0)

    def test_placement_stays_in_annulus_and_is_area_uniform(self):
        rng = np.random.default_rng(3)
        d = wireless.place_devices(50_000, rng, r_min=10.0, r_max=500.0)
        assert d.min() >= 10.0 and d.max() <= 500.0
        # under area-uniform placement, P(r <= x) = (x^2-rmin^2)/(rmax^2-rmin^2)
        x = 250.0
        expected = (x**2 - 100.0) / (500.0**2 - 100.0)
        assert (d <= x).mean() == pytest.approx(expected, abs=0.01)


class TestRateAndDelay:
    def test_rate_hand_value(self):
        # W=1e6, P*g/(W*N0) = 1 => rate = W * log2(2) = W
        g = 1e6 * BUDGET.noise_psd_w_hz / BUDGET.tx_power_w
        assert wireless.rate_bps(1e6, BUDGET, g) == pytest.approx(1e6)

    def test_rate_monotone_and_concave_in_bandwidth(self):
        g = 1e-10
        ws = np.linspace(1e5, 1e8, 40)
        rates = np.array([wireless.rate_bps(w, BUDGET, g) for w in ws])
        assert np.all(np.diff(rates) > 0)
        assert np.all(np.diff(rates, 2) < 0)

    def test_rate_rejects_zero_bandwidth(self):
        with pytest.raises(ValueError):
            wireless.rate_bps(0.0, BUDGET, 1e-9)

    def test_natural_log_base_option(self):
        g = 1e-10
        b2 = wireless.rate_bps(1e6, BUDGET, g)
        be = wireless.rate_bps(1e6, LinkBudget(log_base=math.e), g)
        assert b2 / be == pytest.approx(1.0 / math.log(2.0))

    def test_delay_arithmetic_and_infinite_sentinel(self):
        assert wireless.tx_delay(1000, 500.0) == pytest.approx(2.0)
        assert wireless.tx_delay(1, 0.0) == math.inf
        assert math.isinf(wireless.tx_delay(1, -1.0))

    def test_transmission_ok_boundary_is_inclusive(self):
        g = 1e-10
        rate = wireless.rate_bps(1e6, BUDGET, g)
        bits = 10_000
        tau_exact = bits / rate
        assert wireless.transmission_ok(bits, 1e6, BUDGET, g, tau_exact)
        assert not wireless.transmission_ok(bits, 1e6, BUDGET, g,
                                            tau_exact * (1 - 1e-9))
        with pytest.raises(ValueError):
            wireless.transmission_ok(bits, 1e6, BUDGET, g, 0.0)


class TestTrace:
    def test_roundtrip(self, tmp_path):
        path = str(tmp_path / "trace.jsonl")
        records = [
            {"round": 0, "device": 3, "distance_m": 120.0, "gain": 2.5e-8},
            {"round": 0, "device": 7, "distance_m": 40.0, "gain": 9.1e-7},
            {"round": 1, "device": 3, "distance_m": 120.0, "gain": 4.4e-9},
        ]
        wireless.write_channel_trace(path, records)
        replay = wireless.read_channel_trace(path)
        assert set(replay) == {(0, 3), (0, 7), (1, 3)}
        assert replay[(1, 3)].gain == pytest.approx(4.4e-9)
        assert replay[(0, 7)].distance_m == pytest.approx(40.0)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        path.write_text(
            '{"round": 0, "device": 1, "distance_m": 10.0, "gain": 1e-6}\n\n')
        assert set(wireless.read_channel_trace(str(path))) == {(0, 1)}


@settings(max_examples=40, deadline=None)
@given(
    w=st.floats(1e3, 1e8),
    gain_exp=st.floats(-12, -6),
    bits=st.integers(1, 10**7),
)
def test_delay_consistency(w, gain_exp, bits):
    gain = 10.0 ** gain_exp
    rate = wireless.rate_bps(w, BUDGET, gain)
    delay = wireless.tx_delay(bits, rate)
    assert delay > 0
    assert wireless.transmission_ok(bits, w, BUDGET, gain, delay * (1 + 1e-9))

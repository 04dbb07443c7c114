import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macip.codec import ChannelState, SensorType, UplinkFrame, channel_transmit, encode_frame
from macip.gateway import (
    Accepted,
    Gateway,
    Rejected,
    dedup_outcome,
    ema_smooth,
    median_filter,
)


def frame_bytes(fcnt: int, value: float = 300.0, t: int = 0, eui: int = 0xAA) -> bytes:
    return encode_frame(UplinkFrame.build(
        SensorType.WaterQuality, eui, fcnt, t, {"tds_ppm": value}))


class TestMedianAndEma:
    def test_median_removes_single_spike(self):
        assert median_filter([10, 10, 99, 10, 10]) == 10

    def test_median_singleton(self):
        assert median_filter([7]) == 7

    def test_median_even_window(self):
        assert median_filter([1, 2, 3, 4]) == 2.5

    def test_median_empty_rejected(self):
        with pytest.raises(ValueError):
            median_filter([])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5))
    @settings(max_examples=200)
    def test_median_odd_windows_return_an_element(self, window):
        if len(window) % 2 == 1:
            assert median_filter(window) in window

    def test_ema_initialization_and_fixed_point(self):
        assert ema_smooth(None, 20.0) == 20.0
        assert ema_smooth(20.0, 20.0) == 20.0

    def test_ema_arithmetic(self):
        assert ema_smooth(10.0, 20.0, alpha=0.2) == pytest.approx(12.0)


class TestDedup:
    def test_successor_accepted(self):
        assert dedup_outcome(7, 8) == "accept"

    def test_equal_is_duplicate(self):
        assert dedup_outcome(7, 7) == "duplicate"

    def test_wraparound_accepted(self):
        assert dedup_outcome(65535, 0) == "accept"

    def test_behind_is_replay(self):
        assert dedup_outcome(7, 6) == "replay"

    def test_far_ahead_is_replay(self):
        assert dedup_outcome(7, 7 + 129) == "replay"

    def test_window_edge_accepted(self):
        assert dedup_outcome(7, 7 + 128) == "accept"


class TestAcceptFrame:
    def test_duplicate_delivery(self):
        gw = Gateway()
        wire = frame_bytes(fcnt=1)
        assert isinstance(gw.accept_frame(wire, 0), Accepted)
        second = gw.accept_frame(wire, 0)
        assert isinstance(second, Rejected) and second.reason == "duplicate"

    def test_out_of_range_first_frame(self):
        gw = Gateway()
        wire = encode_frame(UplinkFrame.build(
            SensorType.TempHumidity, 1, 1, 0, {"temp_c": 120.0, "rh_pct": 50.0}))
        res = gw.accept_frame(wire, 0)
        assert isinstance(res, Rejected) and res.reason == "out_of_range"

    def test_corrupted_frame(self):
        gw = Gateway()
        wire = bytearray(frame_bytes(fcnt=1))
        wire[-1] ^= 0xFF
        res = gw.accept_frame(bytes(wire), 0)
        assert isinstance(res, Rejected) and res.reason == "crc_mismatch"

    def test_multichannel_frame_yields_reading_per_channel(self):
        gw = Gateway()
        wire = encode_frame(UplinkFrame.build(
            SensorType.AirQuality, 2, 1, 0,
            {"co2_ppm": 500, "nh3_ppm": 10, "no_ppm": 5, "no2_ppm": 12}))
        res = gw.accept_frame(wire, 0)
        assert isinstance(res, Accepted)
        assert sorted(r.channel for r in res.readings) == [
            "co2_ppm", "nh3_ppm", "no2_ppm", "no_ppm"]

    def test_rejection_counters(self):
        gw = Gateway()
        wire = frame_bytes(fcnt=1)
        gw.accept_frame(wire, 0)
        gw.accept_frame(wire, 0)
        assert gw.frames_accepted == 1
        assert gw.frames_rejected["duplicate"] == 1


class TestSpikeSuppression:
    def test_isolated_spike_never_reaches_filtered_output(self):
        gw = Gateway()
        base = 300.0
        filtered = []
        for k in range(40):
            value = base * 10 if k == 20 else base
            res = gw.accept_frame(frame_bytes(fcnt=k + 1, value=value, t=k), k)
            assert isinstance(res, Accepted)
            filtered.extend(r.filtered for r in res.readings)
        assert max(filtered) <= base + 1e-9
        spike_flags = [r for batch in [gw.force_flush()] for r in batch
                       if r.quality == "spike_removed"]
        assert len(spike_flags) == 1 and spike_flags[0].raw == base * 10

    def test_exactly_once_under_loss_and_duplication(self):
        for seed in range(10):
            rng = random.Random(seed)
            wires = [frame_bytes(fcnt=k + 1, value=300 + (k % 7), t=k, eui=0xBB)
                     for k in range(300)]
            ch = ChannelState(0.1, 0.2, random.Random(1000 + seed))
            deliveries = [d for w in wires for d in channel_transmit(w, ch)]

            def forwarded(frames):
                gw = Gateway()
                out = []
                for i, w in enumerate(frames):
                    gw.accept_frame(w, i)
                out.extend(gw.force_flush() or [])
                return sorted((r.dev_eui, r.sim_time_s, r.channel, r.raw) for r in out)

            unique_in_order = list(dict.fromkeys(deliveries))
            assert forwarded(deliveries) == forwarded(unique_in_order)


class TestBatching:
    def test_size_trigger(self):
        gw = Gateway(batch_max=32)
        for k in range(32):
            gw.accept_frame(frame_bytes(fcnt=k + 1, t=k, eui=0xCC), k)
        flushed = gw.flush_batch(31)
        assert flushed is not None and len(flushed) == 32
        assert gw.flush_batch(31) is None

    def test_age_trigger(self):
        gw = Gateway()
        gw.accept_frame(frame_bytes(fcnt=1, t=0), 0)
        assert gw.flush_batch(3) is None
        flushed = gw.flush_batch(10)
        assert flushed is not None and len(flushed) == 1

    def test_flush_is_time_ordered(self):
        gw = Gateway(batch_max=3)
        gw.accept_frame(frame_bytes(fcnt=1, t=5, eui=1), 5)
        gw.accept_frame(frame_bytes(fcnt=1, t=3, eui=2), 5)
        gw.accept_frame(frame_bytes(fcnt=1, t=9, eui=3), 9)
        flushed = gw.flush_batch(9)
        assert [r.sim_time_s for r in flushed] == [3, 5, 9]

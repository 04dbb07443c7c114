"""Acceptance suite: one test per release criterion, each printing a
pass/fail line. Run with `pytest tests/test_acceptance.py -v -s`."""

import hashlib
import json
import random
import time

import numpy as np
import pytest

import lstm_oracle
from crc_oracle import crc16_bitwise
from macip import forecast as fc
from macip.codec import ChannelState, CodecError, channel_transmit, crc16, decode_frame, encode_frame
from macip.alerts import AlertEngine, build_default_rules
from macip.gateway import Gateway
from macip.lighting import LightGroup, PolicyContext, compute_intensity
from macip.scenario import default_scenario, default_scenario_path
from macip.sim import Simulation, replay
from macip.store import iter_records

from test_codec import random_frame
from test_gateway import frame_bytes


def report(criterion: int, message: str) -> None:
    print(f"[acceptance] criterion {criterion}: PASS - {message}")


class TestC1CodecRoundtrip:
    def test_roundtrip_10k_random_frames_under_5s(self):
        rng = random.Random(20250601)
        start = time.monotonic()
        seen_types = set()
        for _ in range(10_000):
            frame = random_frame(rng)
            seen_types.add(frame.sensor_type)
            assert decode_frame(encode_frame(frame)) == frame
        elapsed = time.monotonic() - start
        assert len(seen_types) == 7
        assert elapsed < 5.0, f"roundtrip took {elapsed:.2f}s"
        report(1, f"10,000 frames across 7 sensor types round-trip in {elapsed:.2f}s")


class TestC2TamperDetection:
    def test_crc_check_vector_from_independent_oracle(self):
        assert crc16_bitwise(b"123456789") == 0x29B1
        assert crc16(b"123456789") == 0x29B1

    def test_every_single_bit_flip_rejected(self):
        rng = random.Random(77)
        flips = 0
        for _ in range(100):
            frame = random_frame(rng)
            wire = encode_frame(frame)
            for bitpos in range(len(wire) * 8):
                corrupted = bytearray(wire)
                corrupted[bitpos // 8] ^= 1 << (bitpos % 8)
                flips += 1
                try:
                    got = decode_frame(bytes(corrupted))
                except CodecError:
                    continue
                assert got == frame, f"bit {bitpos} decoded to a different frame"
                pytest.fail(f"bit {bitpos} accepted despite corruption")
        report(2, f"{flips} single-bit corruptions all rejected; "
                  "CRC vector 0x29B1 confirmed against the bit-serial oracle")


class TestC3GatewayExactlyOnce:
    def test_exactly_once_and_spike_suppression_50_seeds(self):
        base = 300.0
        for seed in range(50):
            stream_rng = random.Random(1000 + seed)
            # isolated x10 faults, at least 5 frames apart
            fault_at = set()
            k = 10
            while k < 990:
                if stream_rng.random() < 0.02:
                    fault_at.add(k)
                    k += 6
                else:
                    k += 1
            wires = [frame_bytes(fcnt=k + 1,
                                 value=base * (10.0 if k in fault_at else 1.0),
                                 t=k, eui=0xAB) for k in range(1000)]
            channel = ChannelState(0.1, 0.2, random.Random(2000 + seed))
            deliveries = [d for w in wires for d in channel_transmit(w, channel)]

            def forwarded(frames):
                gw = Gateway()
                for i, w in enumerate(frames):
                    gw.accept_frame(w, i)
                return gw.force_flush() or []

            with_dups = forwarded(deliveries)
            reference = forwarded(list(dict.fromkeys(deliveries)))
            key = lambda r: (r.dev_eui, r.sim_time_s, r.channel, r.raw, r.filtered)
            assert sorted(map(key, with_dups)) == sorted(map(key, reference))
            assert all(r.filtered <= base + 1e-9 for r in with_dups), \
                "spike leaked into filtered output"
        report(3, "50 seeded lossy/duplicating streams forwarded exactly-once; "
                  "no x10 spike reached filtered output")


class TestC4StoreDurability:
    def test_restart_replay_byte_identical(self, tmp_path):
        sim = Simulation(default_scenario(), data_dir=tmp_path / "run",
                         scenario_source=default_scenario_path())
        sim.run(until=6 * 3600)
        digest_before = sim.state_digest()
        records_before = sim.store._seq
        sim.close()

        rebuilt = replay(tmp_path / "run")
        assert rebuilt.state_digest() == digest_before
        assert rebuilt.store._seq == records_before

        # torn tail: cut into the final record; recovery drops exactly it
        log_path = tmp_path / "run" / "macip.log"
        blob = log_path.read_bytes()
        log_path.write_bytes(blob[:-3])
        recovered = replay(tmp_path / "run")
        assert recovered.store._seq == records_before - 1
        assert sum(1 for _ in iter_records(blob[:-3])) == records_before - 1
        report(4, f"6h run, {records_before} log records: restart digest identical; "
                  "torn tail dropped exactly one record")


class TestC5LstmGradients:
    def test_gradcheck_five_seeds(self):
        eps = 1e-5
        worst_overall = 0.0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            p = fc.init_params(8, 7, rng)
            xs = rng.normal(0, 1, size=(10, 7))
            ys = rng.normal(0, 1, size=10)
            grads, _ = fc.bptt_gradients(p, xs, ys)
            analytic = grads.flat()
            views = ([p.W[g] for g in "ifog"] + [p.U[g] for g in "ifog"]
                     + [p.b[g] for g in "ifog"] + [p.w_y])
            idx = 0
            for arr in views:
                flat = arr.reshape(-1)
                for k in range(flat.size):
                    keep = flat[k]
                    flat[k] = keep + eps
                    up = lstm_oracle.sequence_loss(p, xs, ys)
                    flat[k] = keep - eps
                    down = lstm_oracle.sequence_loss(p, xs, ys)
                    flat[k] = keep
                    fd = (up - down) / (2 * eps)
                    a = analytic[idx]
                    if abs(a - fd) > 1e-8:
                        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
                        worst_overall = max(worst_overall, rel)
                        assert rel < 1e-4, f"seed {seed} param {idx}: rel {rel}"
                    idx += 1
            keep = p.b_y
            p.b_y = keep + eps
            up = lstm_oracle.sequence_loss(p, xs, ys)
            p.b_y = keep - eps
            down = lstm_oracle.sequence_loss(p, xs, ys)
            p.b_y = keep
            fd = (up - down) / (2 * eps)
            rel = abs(analytic[-1] - fd) / max(abs(fd), 1e-8)
            assert rel < 1e-4
        report(5, f"gradients match central differences on 5 seeds "
                  f"(worst rel err {worst_overall:.2e})")

    def test_forward_matches_scalar_oracle_1e12(self):
        rng = np.random.default_rng(99)
        p = fc.init_params(16, 7, rng)
        h = np.zeros(16)
        c = np.zeros(16)
        ho = [0.0] * 16
        co = [0.0] * 16
        worst = 0.0
        for _ in range(50):
            x = rng.normal(0, 1, 7)
            h, c, y = fc.lstm_cell_forward(p, x, h, c)
            ho, co, yo = lstm_oracle.cell_forward(p, x, ho, co)
            worst = max(worst, abs(y - yo),
                        float(np.max(np.abs(h - np.array(ho)))),
                        float(np.max(np.abs(c - np.array(co)))))
        assert worst < 1e-12
        report(5, f"vectorized forward pass matches scalar oracle (max dev {worst:.1e})")


def make_benchmark(seed, days=28):
    """Seasonal (period 24) x 0.5%/day linear growth x 2% noise, with
    slowly-varying pedestrian-level and temperature covariates."""
    rng = np.random.default_rng(seed)
    n = days * 24
    t = np.arange(n)
    hour = t % 24
    day = t / 24.0
    shape = 1.0 + 0.35 * np.sin(2 * np.pi * (hour - 19) / 24.0)
    trend = 1.0 + 0.005 * day
    energy = 100.0 * shape * trend * (1.0 + 0.02 * rng.normal(size=n))
    ped = 960.0 * trend * (1.0 + 0.005 * rng.normal(size=n))   # daily footfall level
    temp = 15.0 + 3.0 * np.sin(2 * np.pi * day / 28.0) + 0.3 * rng.normal(size=n)
    return energy, ped, temp


def benchmark_features(ped, temp, n_train):
    stats = {"ped_min": float(ped[:n_train].min()), "ped_max": float(ped[:n_train].max()),
             "temp_min": float(temp[:n_train].min()), "temp_max": float(temp[:n_train].max())}
    ped_span = stats["ped_max"] - stats["ped_min"] + 1e-9
    temp_span = stats["temp_max"] - stats["temp_min"] + 1e-9
    rows = [fc.build_feature_row(k * 3600,
                                 (ped[k] - stats["ped_min"]) / ped_span,
                                 (temp[k] - stats["temp_min"]) / temp_span, False)
            for k in range(len(ped))]
    return np.stack(rows)


class TestC6ForecastSkill:
    def test_lstm_beats_seasonal_naive_on_4_of_5_seeds(self):
        wins = 0
        lines = []
        for seed in range(5):
            energy, ped, temp = make_benchmark(seed)
            n_train = 27 * 24
            feats = benchmark_features(ped, temp, n_train)
            start = time.monotonic()
            model = fc.train(energy[:n_train], feats[:n_train],
                             fc.TrainConfig(seed=seed, epochs=50))
            train_s = time.monotonic() - start
            assert train_s < 60.0, f"training took {train_s:.1f}s"
            preds = fc.predict(model, feats[:n_train][-48:], 24,
                               last_time_s=(n_train - 1) * 3600)
            actual = energy[n_train:]
            naive = fc.seasonal_naive(energy[:n_train], 24, 24)
            m_lstm = fc.mape(actual, preds)
            m_naive = fc.mape(actual, naive)
            wins += m_lstm < m_naive
            lines.append(f"seed {seed}: lstm {m_lstm:.4f} vs naive {m_naive:.4f} "
                         f"({train_s:.1f}s)")
        for line in lines:
            print(f"[acceptance]   {line}")
        assert wins >= 4, f"only {wins}/5 seeds beat the baseline"
        report(6, f"one-day-ahead LSTM beat seasonal-naive on {wins}/5 seeds")


class TestC7LightingProperties:
    def test_policy_and_energy_properties(self):
        rng = random.Random(7)
        # monotonicity in pedestrian count over randomized contexts
        for _ in range(2000):
            daylight = rng.random() < 0.3
            rain = rng.random() < 0.3
            p1, p2 = sorted((rng.randint(0, 200), rng.randint(0, 200)))
            a = compute_intensity(PolicyContext(0, daylight, p1, rain, False))
            b = compute_intensity(PolicyContext(0, daylight, p2, rain, False))
            assert a <= b
            for v in (a, b):
                assert v == 0.0 or 20.0 <= v <= 100.0

        # override precedence and exact expiry
        group = LightGroup("lg-x", "hub-x")
        group.apply_override(77.0, ttl_s=100, now=0)
        group.tick(PolicyContext(99, True, 0, False, False), 1)
        assert group.intensity_pct == 77.0 and group.mode == "override"
        group.tick(PolicyContext(100, True, 0, False, False), 1)
        assert group.mode == "auto" and group.intensity_pct == 0.0

        # energy delta conservation over a long random run
        group = LightGroup("lg-y", "hub-y", metering_interval_s=900)
        emitted = 0.0
        t = 0
        for _ in range(20_000):
            t += 1
            ctx = PolicyContext(t, rng.random() < 0.4, rng.randint(0, 50),
                                rng.random() < 0.2, rng.random() < 0.02)
            em = group.tick(ctx, 1)
            if em:
                emitted += em.energy_wh
        final = group.meter_flush(t)
        if final:
            emitted += final.energy_wh
        rel = abs(emitted - group.cum_energy_wh) / max(group.cum_energy_wh, 1.0)
        assert rel <= 1e-9
        report(7, f"policy monotone, range {{0}}u[20,100], override exact-expiry, "
                  f"energy conserved (rel err {rel:.1e})")


class TestC8AlertLifecycle:
    def test_boundaries_escalation_and_dedup(self):
        eng = AlertEngine(build_default_rules())
        assert eng.evaluate_reading("BinFill", "fill_pct", 84.9, "d1", 0) == []
        [warn] = eng.evaluate_reading("BinFill", "fill_pct", 85.0, "d1", 0)
        assert warn.severity == "warning" and warn.department == "sanitation"

        # critical alert escalates at exactly +600 and +1200
        [crit] = eng.evaluate_event("fall", "hub-1", 1000)
        assert eng.escalate_due(1599) == []
        assert eng.escalate_due(1600) == [crit] and crit.escalation_tier == 1
        assert eng.escalate_due(2199) == []
        assert eng.escalate_due(2200) == [crit] and crit.escalation_tier == 2

        # acked alerts never escalate
        [crit2] = eng.evaluate_event("abnormal", "hub-2", 0)
        eng.ack(crit2.alert_id, "op", 10)
        eng.escalate_due(100_000)
        assert crit2.escalation_tier == 0

        # warnings never escalate
        eng.escalate_due(1_000_000)
        assert warn.escalation_tier == 0

        # at most one open alert per (rule, source)
        assert eng.evaluate_reading("BinFill", "fill_pct", 99.0, "d1", 100) == []
        open_keys = [(a.rule_id, a.source_ref) for a in eng.list_alerts("open")]
        assert len(open_keys) == len(set(open_keys))
        report(8, "rule boundaries exact (85 fires, 84.9 does not); escalation at "
                  "+600/+1200; ack freezes; one open alert per (rule, source)")


class TestC9EndToEndDeterminism:
    def test_default_scenario_24h_twice_identical(self, tmp_path):
        def one_run(tag):
            start = time.monotonic()
            sim = Simulation(default_scenario(), data_dir=tmp_path / tag,
                             scenario_source=default_scenario_path())
            summary = sim.run()   # full 24 simulated hours, seed 42
            wall = time.monotonic() - start
            digest = sim.log_digest()
            state = sim.state_digest()
            sim.close()
            assert wall < 120.0, f"run took {wall:.1f}s"
            return summary, digest, state, wall

        s1, log1, state1, w1 = one_run("a")
        s2, log2, state2, w2 = one_run("b")
        assert s1 == s2, "summaries differ between identical runs"
        assert log1 == log2, "persistent log digests differ"
        assert state1 == state2
        assert s1["frames"]["sent"] > 10_000
        report(9, f"24h x2 runs identical (log {log1[:12]}..., "
                  f"walls {w1:.1f}s/{w2:.1f}s, well under 120s at 3600x pacing)")


@pytest.fixture(scope="module")
def served():
    from test_api import LiveServer
    from macip.api import create_app

    sim = Simulation(default_scenario())
    sim.run(until=13_000)
    with LiveServer(create_app(sim, token="acc-token")) as server:
        yield sim, server


class TestC10ApiContract:
    def test_read_your_writes_and_stream_gaps(self, served):
        import httpx

        sim, server = served
        auth = {"Authorization": "Bearer acc-token"}
        base = server.base

        # read-your-writes: override
        r = httpx.post(f"{base}/api/v1/lights/lg-04/override",
                       json={"intensity": 66, "ttl_s": 600}, headers=auth, timeout=10)
        assert r.status_code == 200
        lights = httpx.get(f"{base}/api/v1/lights", headers=auth, timeout=10).json()
        state = next(l for l in lights["lights"] if l["group_id"] == "lg-04")
        assert state["mode"] == "override" and state["override_value"] == 66.0

        # read-your-writes: ack
        alerts = httpx.get(f"{base}/api/v1/alerts?status=open", headers=auth,
                           timeout=10).json()["alerts"]
        target = alerts[0]["alert_id"]
        r = httpx.post(f"{base}/api/v1/alerts/{target}/ack", json={"actor": "op"},
                       headers=auth, timeout=10)
        assert r.status_code == 200
        shown = httpx.get(f"{base}/api/v1/alerts", headers=auth, timeout=10).json()
        assert next(a for a in shown["alerts"]
                    if a["alert_id"] == target)["status"] == "acked"

        # stream: consume, force disconnect, miss events, reconnect; ids stay
        # contiguous through the replay
        last = sim.bus.last_event_id
        sim.bus.publish("light.changed", {"group_id": "w1"}, 1)
        seen: list[int] = []
        with httpx.stream("GET", f"{base}/api/v1/events?token=acc-token"
                          f"&last_event_id={last}", timeout=10) as resp:
            buf = b""
            for chunk in resp.iter_raw():
                buf += chunk
                if b'"group_id": "w1"' in buf:
                    break
        sim.bus.publish("light.changed", {"group_id": "w2"}, 2)
        sim.bus.publish("light.changed", {"group_id": "w3"}, 3)
        with httpx.stream("GET", f"{base}/api/v1/events?token=acc-token"
                          f"&last_event_id={last + 1}", timeout=10) as resp:
            buf = b""
            for chunk in resp.iter_raw():
                buf += chunk
                if b'"group_id": "w3"' in buf:
                    break
        ids = [int(line.split(": ")[1]) for line in buf.decode().splitlines()
               if line.startswith("id: ")]
        assert ids[:2] == [last + 2, last + 3], "replayed ids not contiguous"

        # reconnect far beyond the buffer: explicit gap, never silent skip
        for i in range(1100):
            sim.bus.publish("reading", {"n": i}, 0)
        with httpx.stream("GET", f"{base}/api/v1/events?token=acc-token"
                          f"&last_event_id=1", timeout=10) as resp:
            buf = b""
            for chunk in resp.iter_raw():
                buf += chunk
                if b"event: gap" in buf:
                    break
        assert b"event: gap" in buf
        report(10, "override and ack are read-your-writes; stream replay is "
                   "contiguous after reconnect and gaps are explicit")

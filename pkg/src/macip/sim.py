"""Scenario runtime: drives the clock in fixed 1 s ticks and wires the whole
pipeline per tick - device transmissions through the lossy channel into the
per-hub gateways, batch ingestion into the store, rule evaluation, light
control with energy metering (metered energy re-enters as EnergyMeter
frames), escalation checks, pedestrian detections, and daily forecaster
retraining. Deterministic for a fixed (scenario, seed)."""

from __future__ import annotations

import dataclasses
import hashlib
import heapq
import json
import threading
import time
from collections import deque
from pathlib import Path

import numpy as np

from . import forecast as fc
from .alerts import AlertEngine, build_default_rules
from .codec import ChannelState, SensorType, channel_transmit, encode_frame
from .devices import SimDevice, SensorSample, bin_fill_percent, next_uplink, read_sensor, sample_environment
from .events import EventBus
from .gateway import Gateway, Rejected
from .lighting import LightGroup, MeterEmission, PolicyContext
from .pedestrians import DetectionEvent, PED_CHANNEL, ingest_detection, simulate_interval
from .scenario import Scenario
from .store import CoreStore, DeviceRecord, RECORD_ALERT, RECORD_COMMAND, RECORD_LIGHT
from .util import derive_rng, derive_seed

LOG_FILENAME = "macip.log"
SCENARIO_FILENAME = "scenario.yaml"
MODELS_DIRNAME = "models"
SILENT_CHECK_INTERVAL_S = 60
RETRAIN_INTERVAL_S = 86400


class Simulation:
    """One live scenario run plus the queryable state behind the portal."""

    def __init__(self, scenario: Scenario, data_dir: str | Path | None = None,
                 headless: bool = True, scenario_source: str | Path | None = None):
        self.scenario = scenario
        self.headless = headless
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.lock = threading.RLock()
        self.sim_time = 0
        self.running = False
        self._commands: deque = deque()

        self.store = CoreStore()
        self.bus = EventBus()
        thresholds = scenario.thresholds
        self.alert_engine = AlertEngine(
            build_default_rules(thresholds),
            escalation_after_s=int(thresholds.get("escalation_after_s", 600)),
            notifier=self._on_alert_transition)
        self.silent_factor = float(thresholds.get("silent_factor", 3.0))

        # fresh mutable device state per run; scenario objects stay pristine
        self.devices: list[SimDevice] = [dataclasses.replace(d) for d in scenario.devices]
        self.silent_cadence: dict[str, int] = {
            d.eui_hex: d.report_interval_s for d in self.devices}
        self.meter_devices: dict[str, SimDevice] = {}
        self.lights: dict[str, LightGroup] = {}
        for spec in scenario.light_groups:
            self.lights[spec.group_id] = LightGroup(
                spec.group_id, spec.hub_id, p_max_w=spec.p_max_w,
                metering_interval_s=spec.metering_interval_s)
            # the lighting controller paces meter transmissions, so the device
            # itself only carries the radio duty-cycle floor
            meter = SimDevice(dev_eui=spec.meter_eui,
                              sensor_type=SensorType.EnergyMeter,
                              hub_id=spec.hub_id, report_interval_s=1)
            self.meter_devices[spec.group_id] = meter
            self.silent_cadence[meter.eui_hex] = spec.metering_interval_s

        self.gateways: dict[str, Gateway] = {h.hub_id: Gateway() for h in scenario.hubs}
        seed = scenario.seed
        loss = float(scenario.channel.get("loss_prob", 0.0))
        dup = float(scenario.channel.get("dup_prob", 0.0))
        self.channels: dict[int, ChannelState] = {}
        self.dev_rngs = {}
        self.device_by_eui: dict[str, SimDevice] = {}
        for dev in list(self.devices) + list(self.meter_devices.values()):
            self.channels[dev.dev_eui] = ChannelState(
                loss, dup, derive_rng(seed, "chan", dev.eui_hex))
            self.dev_rngs[dev.dev_eui] = derive_rng(seed, "dev", dev.eui_hex)
            self.device_by_eui[dev.eui_hex] = dev
        self.ped_rngs = {h.hub_id: derive_rng(seed, "ped", h.hub_id)
                         for h in scenario.hubs}
        self.ped_last: dict[str, int] = {h.hub_id: 0 for h in scenario.hubs}

        self.models: dict[str, fc.ForecastModel] = {}
        self.counters = {
            "frames_sent": 0, "frames_lost": 0, "frames_duplicated": 0,
            "detections": 0, "overrides_applied": 0, "models_trained": 0,
        }

        self._register_all()
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            if scenario_source is not None:
                target = self.data_dir / SCENARIO_FILENAME
                if Path(scenario_source) != target:
                    target.write_bytes(Path(scenario_source).read_bytes())
            self.store.attach_log(self.data_dir / LOG_FILENAME)

        # schedule: (time, seq, kind, key) with seq as the deterministic tiebreak
        self._heap: list[tuple[int, int, str, str]] = []
        self._heap_seq = 0
        for dev in self.devices:
            phase = dev.dev_eui % dev.report_interval_s or dev.report_interval_s
            self._schedule(phase, "tx", dev.eui_hex)
        interval = int(scenario.detection["interval_s"])
        for hub in scenario.hubs:
            self._schedule(interval, "ped", hub.hub_id)

    # ---- setup helpers -----------------------------------------------------

    def _register_all(self) -> None:
        for dev in self.devices:
            self.store.register_device(DeviceRecord(
                dev_eui=dev.eui_hex, sensor_type=dev.sensor_type.name,
                hub_id=dev.hub_id, label=f"{dev.sensor_type.name} @ {dev.hub_id}"))
        for group_id, dev in self.meter_devices.items():
            self.store.register_device(DeviceRecord(
                dev_eui=dev.eui_hex, sensor_type=dev.sensor_type.name,
                hub_id=dev.hub_id, label=f"EnergyMeter {group_id}"))
        for hub in self.scenario.hubs:
            self.store.register_entity(hub.hub_id)

    def _schedule(self, t: int, kind: str, key: str) -> None:
        self._heap_seq += 1
        heapq.heappush(self._heap, (t, self._heap_seq, kind, key))

    def _on_alert_transition(self, alert, kind: str) -> None:
        data = alert.to_json()
        self.store.log_append(RECORD_ALERT, data)
        self.bus.publish(kind, data, self.sim_time)

    # ---- command path --------------------------------------------------------

    def submit_command(self, fn, timeout: float = 5.0):
        """Run an operator command between ticks (immediately when idle).
        Returns fn's result or raises its exception."""
        if not self.running:
            with self.lock:
                return fn()
        done = threading.Event()
        box: dict = {}

        def wrapped():
            try:
                box["result"] = fn()
            except Exception as err:   # surfaced to the caller
                box["error"] = err
            finally:
                done.set()

        self._commands.append(wrapped)
        if not self.running:
            # the run finished between the check and the enqueue: drain here
            with self.lock:
                while self._commands:
                    self._commands.popleft()()
        if not done.wait(timeout):
            raise TimeoutError("command not applied in time")
        if "error" in box:
            raise box["error"]
        return box["result"]

    def override_light(self, group_id: str, value: float, ttl_s: int) -> dict:
        group = self.lights.get(group_id)
        if group is None:
            from .lighting import UnknownGroup
            raise UnknownGroup(group_id)
        group.apply_override(value, ttl_s, self.sim_time)
        group.intensity_pct = float(value)
        self.counters["overrides_applied"] += 1
        state = group.to_json()
        self.store.log_append(RECORD_COMMAND, {
            "kind": "override", "group_id": group_id, "value": value,
            "ttl_s": ttl_s, "t": self.sim_time})
        self.store.log_append(RECORD_LIGHT, state)
        self.store.flush()   # operator actions are durable immediately
        self.bus.publish("light.changed", state, self.sim_time)
        return state

    def ack_alert(self, alert_id: str, actor: str) -> dict:
        alert = self.alert_engine.ack(alert_id, actor, self.sim_time)
        self.store.log_append(RECORD_COMMAND, {
            "kind": "ack", "alert_id": alert_id, "actor": actor, "t": self.sim_time})
        self.store.flush()
        return alert.to_json()

    def resolve_alert(self, alert_id: str, actor: str) -> dict:
        alert = self.alert_engine.resolve(alert_id, actor, self.sim_time)
        self.store.log_append(RECORD_COMMAND, {
            "kind": "resolve", "alert_id": alert_id, "actor": actor, "t": self.sim_time})
        self.store.flush()
        return alert.to_json()

    def ingest_external_detection(self, event: DetectionEvent) -> None:
        ingest_detection(event, self.scenario.hub_ids(), self.store, self.alert_engine)
        if event.kind == "count":
            self.ped_last[event.hub_id] = event.count
            self.bus.publish("reading", {
                "entity": event.hub_id, "channel": PED_CHANNEL,
                "t": event.sim_time_s, "value": float(event.count),
                "quality": "ok"}, self.sim_time)
        self.counters["detections"] += 1
        if not self.running:
            self.store.flush()   # externally ingested data persists promptly

    # ---- per-tick machinery ---------------------------------------------------

    def _transmit(self, dev: SimDevice, sample: SensorSample, t: int) -> None:
        frame = next_uplink(dev, sample)
        wire = encode_frame(frame)
        self.counters["frames_sent"] += 1
        deliveries = channel_transmit(wire, self.channels[dev.dev_eui])
        if not deliveries:
            self.counters["frames_lost"] += 1
        elif len(deliveries) > 1:
            self.counters["frames_duplicated"] += len(deliveries) - 1
        gateway = self.gateways[dev.hub_id]
        for data in deliveries:
            result = gateway.accept_frame(data, t)
            if isinstance(result, Rejected):
                eui_hex = f"{result.dev_eui:016x}" if result.dev_eui is not None else None
                self.store.record_rejection(eui_hex, result.reason, t)

    def _device_tx(self, eui_hex: str, t: int) -> None:
        dev = self.device_by_eui[eui_hex]
        truth = sample_environment(self.scenario.environments[dev.hub_id], t)
        sample = read_sensor(dev, truth, self.dev_rngs[dev.dev_eui])
        self._transmit(dev, sample, t)
        self._schedule(t + dev.report_interval_s, "tx", eui_hex)

    def _ped_detections(self, hub_id: str, t: int) -> None:
        profile = self.scenario.environments[hub_id]
        interval = int(self.scenario.detection["interval_s"])
        events = simulate_interval(profile, t, interval, self.ped_rngs[hub_id],
                                   float(self.scenario.detection["abnormal_prob"]))
        for event in events:
            self.ingest_external_detection(event)
        self._schedule(t + interval, "ped", hub_id)

    def _meter_uplink(self, emission: MeterEmission, t: int) -> None:
        dev = self.meter_devices[emission.group_id]
        sample = SensorSample(dev.dev_eui, SensorType.EnergyMeter, t,
                              {"energy_wh": emission.energy_wh})
        self._transmit(dev, sample, t)

    def _light_ctx(self, hub_id: str, t: int) -> PolicyContext:
        profile = self.scenario.environments[hub_id]
        raining = any(s <= t < e for s, e in profile.rain_windows)
        event = any(s <= t < e for s, e in profile.event_windows)
        return PolicyContext(t, self.scenario.is_daylight(t),
                             self.ped_last[hub_id], raining, event)

    def _tick_lights(self, t: int) -> None:
        for group in self.lights.values():
            before = (group.intensity_pct, group.mode)
            emission = group.tick(self._light_ctx(group.hub_id, t), 1.0)
            if (group.intensity_pct, group.mode) != before:
                state = group.to_json()
                self.store.log_append(RECORD_LIGHT, state)
                self.bus.publish("light.changed", state, t)
            if emission is not None:
                self._meter_uplink(emission, t)

    def _flush_gateways(self, t: int, force: bool = False) -> None:
        for hub_id in self.gateways:
            gateway = self.gateways[hub_id]
            batch = gateway.force_flush() if force else gateway.flush_batch(t)
            if batch:
                self._ingest_batch(batch)

    def _ingest_batch(self, batch) -> None:
        self.store.append_points(batch)
        for r in batch:
            payload = {"entity": r.eui_hex, "channel": r.channel, "t": r.sim_time_s,
                       "value": r.filtered, "quality": r.quality}
            self.bus.publish("reading", payload, self.sim_time)
            self.alert_engine.evaluate_reading(
                r.sensor_type.name, r.channel, r.filtered, r.eui_hex, r.sim_time_s)
            if r.sensor_type is SensorType.BinFill and r.channel == "distance_mm":
                dev = self.device_by_eui[r.eui_hex]
                fill = bin_fill_percent(r.filtered, dev.bin_depth_mm)
                if self.store.append_reading(r.eui_hex, "fill_pct", r.sim_time_s, fill):
                    self.alert_engine.evaluate_reading(
                        "BinFill", "fill_pct", fill, r.eui_hex, r.sim_time_s)

    def _check_silent(self, t: int) -> None:
        infos = []
        for eui_hex in self.device_by_eui:
            record = self.store.devices[eui_hex]
            last = record.last_seen if record.last_seen is not None else record.registered_at
            infos.append((eui_hex, self.silent_cadence[eui_hex], last))
        self.alert_engine.check_silent(infos, t, self.silent_factor)

    # ---- forecaster -----------------------------------------------------------

    def _hourly_covariates(self, hub_id: str, hours: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """Trailing-24h pedestrian footfall and mean temperature per hour."""
        ped_hourly = dict(self.store.query_range(hub_id, PED_CHANNEL, 0, 1 << 40, "sum_1h"))
        temp_eui = next((d.eui_hex for d in self.devices
                         if d.hub_id == hub_id and d.sensor_type is SensorType.TempHumidity),
                        None)
        temp_hourly = (dict(self.store.query_range(temp_eui, "temp_c", 0, 1 << 40, "mean_1h"))
                       if temp_eui else {})
        ped = []
        temp = []
        for tb in hours:
            window = [ped_hourly.get(tb - k * 3600, 0.0) for k in range(24)]
            ped.append(sum(window))
            temps = [temp_hourly[tb - k * 3600] for k in range(24)
                     if tb - k * 3600 in temp_hourly]
            temp.append(sum(temps) / len(temps) if temps else 0.0)
        return np.array(ped), np.array(temp)

    def _feature_matrix(self, hub_id: str, hours: list[int],
                        stats: dict | None = None) -> tuple[np.ndarray, dict]:
        ped, temp = self._hourly_covariates(hub_id, hours)
        if stats is None:
            stats = {"ped_min": float(ped.min()), "ped_max": float(ped.max()),
                     "temp_min": float(temp.min()), "temp_max": float(temp.max())}
        ped_span = max(stats["ped_max"] - stats["ped_min"], 1e-9)
        temp_span = max(stats["temp_max"] - stats["temp_min"], 1e-9)
        profile = self.scenario.environments[hub_id]
        rows = [fc.build_feature_row(
                    tb, (p - stats["ped_min"]) / ped_span,
                    (tm - stats["temp_min"]) / temp_span,
                    any(s <= tb < e for s, e in profile.event_windows))
                for tb, p, tm in zip(hours, ped, temp)]
        return np.stack(rows), stats

    def _train_config(self, group_id: str) -> fc.TrainConfig:
        over = self.scenario.forecast
        return fc.TrainConfig(
            window_len=int(over.get("window_len", 24)),
            learning_rate=float(over.get("learning_rate", 0.01)),
            epochs=int(over.get("epochs", 50)),
            clip_norm=float(over.get("clip_norm", 5.0)),
            hidden_size=int(over.get("hidden_size", 16)),
            batch_size=int(over.get("batch_size", 32)),
            seed=derive_seed(self.scenario.seed, "train", group_id) & 0x7FFFFFFF)

    def retrain_group(self, group_id: str, t: int) -> bool:
        """Fit a fresh model for one light group from its stored hourly
        energy; returns False when there is not enough history yet."""
        group = self.lights[group_id]
        meter = self.meter_devices[group_id]
        hourly = self.store.query_range(meter.eui_hex, "energy_wh", 0, t + 1, "sum_1h")
        cfg = self._train_config(group_id)
        if len(hourly) < 2 * cfg.window_len:
            return False
        hours = [h for h, _ in hourly]
        targets = np.array([v for _, v in hourly])
        feats, stats = self._feature_matrix(group.hub_id, hours)
        model = fc.train(targets, feats, cfg, feature_stats=stats)
        self.models[group_id] = model
        self.counters["models_trained"] += 1
        if self.data_dir is not None:
            mdir = self.data_dir / MODELS_DIRNAME
            mdir.mkdir(exist_ok=True)
            (mdir / f"{group_id}.model").write_bytes(fc.serialize_model(model))
        self.bus.publish("forecast.updated", {
            "group_id": group_id, "n_points": len(targets),
            "final_mse": model.meta["final_mse"]}, t)
        return True

    def _retrain_forecasters(self, t: int) -> None:
        for group_id in self.lights:
            self.retrain_group(group_id, t)

    def retrain_command(self, group_id: str) -> dict:
        """Operator-triggered retrain for one group."""
        if group_id not in self.lights:
            from .lighting import UnknownGroup
            raise UnknownGroup(group_id)
        trained = self.retrain_group(group_id, self.sim_time)
        if not trained:
            raise fc.InsufficientData(
                f"{group_id}: not enough hourly energy history to train")
        self.store.log_append(RECORD_COMMAND, {
            "kind": "retrain", "group_id": group_id, "t": self.sim_time})
        self.store.flush()
        return {"group_id": group_id, "trained": True,
                "model": {k: float(v) for k, v in self.models[group_id].meta.items()}}

    def forecast_energy(self, group_id: str, horizon: int) -> dict:
        """Forecast from the stored model and the latest hourly context."""
        model = self.models.get(group_id)
        if model is None:
            raise KeyError(group_id)
        group = self.lights[group_id]
        meter = self.meter_devices[group_id]
        hourly = self.store.query_range(meter.eui_hex, "energy_wh", 0, 1 << 40, "sum_1h")
        if len(hourly) < model.window_len:
            raise fc.InsufficientData("not enough hourly history for context")
        hours = [h for h, _ in hourly][-3 * model.window_len:]
        feats, _ = self._feature_matrix(group.hub_id, hours, stats=model.feature_stats)
        last_t = hours[-1]
        profile = self.scenario.environments[group.hub_id]
        flags = [any(s <= last_t + k * 3600 < e for s, e in profile.event_windows)
                 for k in range(1, horizon + 1)]
        values = fc.predict(model, feats, horizon, last_time_s=last_t, event_flags=flags)
        return {"group_id": group_id,
                "start_t": last_t + 3600,
                "times": [last_t + k * 3600 for k in range(1, horizon + 1)],
                "values": values,
                "model": {k: float(v) for k, v in model.meta.items()}}

    # ---- main loop -----------------------------------------------------------

    def run(self, until: int | None = None, speed: float | None = None) -> dict:
        """Advance the clock to `until` (or the scenario end). Resumable:
        a second call continues from where the previous one stopped."""
        duration = self.scenario.duration_s if until is None else min(
            until, self.scenario.duration_s)
        speed = speed or self.scenario.speed_factor
        self.running = True
        start_wall = time.monotonic() - self.sim_time / speed
        try:
            for t in range(self.sim_time + 1, duration + 1):
                with self.lock:
                    self.sim_time = t
                    while self._commands:
                        self._commands.popleft()()
                    while self._heap and self._heap[0][0] <= t:
                        _, _, kind, key = heapq.heappop(self._heap)
                        if kind == "tx":
                            self._device_tx(key, t)
                        else:
                            self._ped_detections(key, t)
                    self._tick_lights(t)
                    self._flush_gateways(t)
                    self.alert_engine.escalate_due(t)
                    if t % SILENT_CHECK_INTERVAL_S == 0:
                        self._check_silent(t)
                    if t % RETRAIN_INTERVAL_S == 0:
                        # pull the boundary meter frames out of the gateway
                        # batches so the training series includes the last hour
                        self._flush_gateways(t, force=True)
                        self._retrain_forecasters(t)
                if not self.headless:
                    target = start_wall + t / speed
                    delay = target - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
            with self.lock:
                self._finalize(duration)
        finally:
            self.running = False
        return self.summary()

    def _finalize(self, t: int) -> None:
        for group in self.lights.values():
            emission = group.meter_flush(t)
            if emission is not None:
                self._meter_uplink(emission, t)
        self._flush_gateways(t, force=True)
        for group in self.lights.values():
            self.store.log_append(RECORD_LIGHT, group.to_json())
        self.store.flush()

    # ---- summaries, digests, shutdown ----------------------------------------

    def summary(self) -> dict:
        with self.lock:
            accepted = sum(g.frames_accepted for g in self.gateways.values())
            rejected: dict[str, int] = {}
            for g in self.gateways.values():
                for reason, n in g.frames_rejected.items():
                    rejected[reason] = rejected.get(reason, 0) + n
            stored = sum(len(self.store.query_range(e, c, 0, 1 << 40))
                         for e, c in self.store.series_keys())
            return {
                "scenario": self.scenario.name,
                "seed": self.scenario.seed,
                "duration_s": self.scenario.duration_s,
                "sim_time_s": self.sim_time,
                "frames": {
                    "sent": self.counters["frames_sent"],
                    "lost": self.counters["frames_lost"],
                    "duplicated": self.counters["frames_duplicated"],
                    "accepted": accepted,
                    "rejected": dict(sorted(rejected.items())),
                },
                "readings_stored": stored,
                "out_of_order_dropped": self.store.out_of_order_dropped,
                "detections": self.counters["detections"],
                "alerts": {
                    "total": len(self.alert_engine.alerts),
                    "by_severity": self.alert_engine.counts_by_severity(),
                    "open": len(self.alert_engine.list_alerts("open")),
                },
                "lights": {
                    "total_energy_wh": round(sum(g.cum_energy_wh
                                                 for g in self.lights.values()), 6),
                    "overrides_applied": self.counters["overrides_applied"],
                },
                "forecast": {"models_trained": self.counters["models_trained"]},
            }

    def state_digest(self) -> str:
        """Digest of every query result the portal can serve; used for the
        restart-determinism checks."""
        with self.lock:
            payload = {
                "devices": [d.to_json() for d in self.store.list_devices()],
                "series": {f"{e}/{c}": self.store.query_range(e, c, 0, 1 << 40)
                           for e, c in self.store.series_keys()},
                "hourly": {f"{e}/{c}": self.store.query_range(e, c, 0, 1 << 40, "mean_1h")
                           for e, c in self.store.series_keys()},
                "alerts": [a.to_json() for a in self.alert_engine.list_alerts()],
                "lights": {gid: g.to_json() for gid, g in sorted(self.lights.items())},
            }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def log_digest(self) -> str:
        if self.data_dir is None:
            raise ValueError("no data dir attached")
        self.store.flush()
        return hashlib.sha256((self.data_dir / LOG_FILENAME).read_bytes()).hexdigest()

    def close(self) -> None:
        self.store.close()


def replay(data_dir: str | Path) -> Simulation:
    """Rebuild serving state from a run directory (scenario + log), without
    simulating. The returned Simulation is read-only: commands are refused by
    the API layer and the clock stays at the last logged state."""
    from .scenario import load_scenario

    data_dir = Path(data_dir)
    scenario = load_scenario(data_dir / SCENARIO_FILENAME)
    sim = Simulation(scenario, data_dir=None, headless=True)
    extras = sim.store.replay_log(data_dir / LOG_FILENAME)
    sim.alert_engine.restore(extras[RECORD_ALERT])
    latest_light: dict[str, dict] = {}
    for state in extras[RECORD_LIGHT]:
        latest_light[state["group_id"]] = state
    for group_id, state in latest_light.items():
        if group_id in sim.lights:
            sim.lights[group_id].restore_json(state)
    max_t = 0
    for eui, channel in sim.store.series_keys():
        points = sim.store.query_range(eui, channel, 0, 1 << 40)
        if points:
            max_t = max(max_t, points[-1][0])
    sim.sim_time = max_t
    mdir = data_dir / MODELS_DIRNAME
    if mdir.is_dir():
        for blob_path in sorted(mdir.glob("*.model")):
            sim.models[blob_path.stem] = fc.deserialize_model(blob_path.read_bytes())
    return sim

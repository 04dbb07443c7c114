"""Scenario files: the single input describing a simulation run - hubs,
device fleet, environment profiles, light groups, channel behaviour, rule
thresholds and the event schedule. YAML on disk, validated with field-level
error messages."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import yaml

from .codec import SensorType
from .devices import EnvironmentProfile, SimDevice
from .gateway import VALIDATION_TABLE

HUB_KINDS = ("parking", "tourist")

DEFAULT_SCENARIO_RESOURCE = "default_scenario.yaml"


class ScenarioInvalid(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__(f"{len(errors)} scenario error(s)")
        self.errors = errors


@dataclass
class Hub:
    hub_id: str
    name: str
    lat: float
    lon: float
    kind: str


@dataclass
class LightGroupSpec:
    group_id: str
    hub_id: str
    meter_eui: int
    p_max_w: float = 100.0
    metering_interval_s: int = 3600


@dataclass
class Scenario:
    name: str
    seed: int
    epoch: str                     # ISO-8601, scenario time zero
    duration_s: int
    speed_factor: float
    hubs: list[Hub]
    environments: dict[str, EnvironmentProfile]
    devices: list[SimDevice]
    light_groups: list[LightGroupSpec]
    channel: dict = field(default_factory=lambda: {"loss_prob": 0.0, "dup_prob": 0.0})
    daylight: dict = field(default_factory=lambda: {"start_hour": 6, "end_hour": 18})
    detection: dict = field(default_factory=lambda: {"interval_s": 300,
                                                     "abnormal_prob": 0.001})
    thresholds: dict = field(default_factory=dict)
    forecast: dict = field(default_factory=dict)

    def epoch_dt(self) -> datetime:
        return datetime.fromisoformat(self.epoch.replace("Z", "+00:00"))

    def display_time(self, sim_time_s: float) -> str:
        return (self.epoch_dt() + timedelta(seconds=sim_time_s)).isoformat()

    def is_daylight(self, sim_time_s: float) -> bool:
        hour = (sim_time_s / 3600.0) % 24.0
        start = self.daylight["start_hour"]
        end = self.daylight["end_hour"]
        if start <= end:
            return start <= hour < end
        return hour >= start or hour < end   # window wrapping midnight

    def hub_ids(self) -> set[str]:
        return {h.hub_id for h in self.hubs}


def _err(errors: list[str], path: str, message: str) -> None:
    errors.append(f"{path}: {message}")


def _need(data: dict, key: str, types, errors: list[str], prefix: str, default=None):
    if key not in data:
        if default is not None:
            return default
        _err(errors, f"{prefix}{key}", "missing")
        return None
    value = data[key]
    if types is float:
        types = (int, float)
    if not isinstance(value, types) or isinstance(value, bool):
        _err(errors, f"{prefix}{key}", f"expected {getattr(types, '__name__', types)}, "
                                       f"got {type(value).__name__}")
        return None
    return value


def _windows(raw, errors: list[str], path: str) -> list[tuple[int, int]]:
    out = []
    if raw is None:
        return out
    if not isinstance(raw, list):
        _err(errors, path, "expected a list of [start, end) pairs")
        return out
    for i, pair in enumerate(raw):
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(x, (int, float)) for x in pair)):
            _err(errors, f"{path}[{i}]", "expected [start_s, end_s]")
            continue
        start, end = int(pair[0]), int(pair[1])
        if start >= end:
            _err(errors, f"{path}[{i}]", "start must be < end")
            continue
        out.append((start, end))
    return out


_PROFILE_RANGES = {
    "temp_mean_c": VALIDATION_TABLE["temp_c"],
    "humidity_mean_pct": VALIDATION_TABLE["rh_pct"],
    "water_base_mm": VALIDATION_TABLE["distance_mm"],
    "tds_base_ppm": VALIDATION_TABLE["tds_ppm"],
    "uv_peak_index": VALIDATION_TABLE["uv_index"],
}


def parse_scenario(data: dict) -> Scenario:
    """Validate a raw scenario mapping; raises ScenarioInvalid listing every
    field-level problem found."""
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ScenarioInvalid(["scenario: top level must be a mapping"])

    name = _need(data, "name", str, errors, "")
    seed = _need(data, "seed", int, errors, "")
    epoch = _need(data, "epoch", str, errors, "", default="2025-06-01T00:00:00Z")
    duration_s = _need(data, "duration_s", int, errors, "")
    speed_factor = _need(data, "speed_factor", float, errors, "", default=60.0)
    if duration_s is not None and duration_s < 0:
        _err(errors, "duration_s", "must be >= 0")
    if epoch is not None:
        try:
            datetime.fromisoformat(str(epoch).replace("Z", "+00:00"))
        except ValueError:
            _err(errors, "epoch", f"not ISO-8601: {epoch!r}")

    channel = dict(data.get("channel") or {})
    for key in ("loss_prob", "dup_prob"):
        p = channel.setdefault(key, 0.0)
        if not isinstance(p, (int, float)) or not (0.0 <= p <= 1.0):
            _err(errors, f"channel.{key}", f"must be a probability, got {p!r}")

    daylight = dict(data.get("daylight") or {"start_hour": 6, "end_hour": 18})
    detection = dict(data.get("detection") or {})
    detection.setdefault("interval_s", 300)
    detection.setdefault("abnormal_prob", 0.001)
    if detection["interval_s"] <= 0:
        _err(errors, "detection.interval_s", "must be > 0")

    hubs: list[Hub] = []
    hub_ids: set[str] = set()
    for i, raw in enumerate(data.get("hubs") or []):
        prefix = f"hubs[{i}]."
        hub_id = _need(raw, "hub_id", str, errors, prefix)
        hub_name = _need(raw, "name", str, errors, prefix, default="")
        lat = _need(raw, "lat", float, errors, prefix)
        lon = _need(raw, "lon", float, errors, prefix)
        kind = _need(raw, "kind", str, errors, prefix)
        if kind is not None and kind not in HUB_KINDS:
            _err(errors, f"{prefix}kind", f"must be one of {HUB_KINDS}")
        if hub_id is not None:
            if hub_id in hub_ids:
                _err(errors, f"{prefix}hub_id", f"duplicate {hub_id!r}")
            hub_ids.add(hub_id)
        if not errors:
            hubs.append(Hub(hub_id, hub_name, float(lat), float(lon), kind))
        elif hub_id is not None and lat is not None and lon is not None and kind in HUB_KINDS:
            hubs.append(Hub(hub_id, hub_name, float(lat), float(lon), kind))
    if not hubs:
        _err(errors, "hubs", "at least one hub required")

    environments: dict[str, EnvironmentProfile] = {}
    for i, raw in enumerate(data.get("environments") or []):
        prefix = f"environments[{i}]."
        hub_id = _need(raw, "hub_id", str, errors, prefix)
        if hub_id is not None and hub_id not in hub_ids:
            _err(errors, f"{prefix}hub_id", f"unknown hub {hub_id!r}")
        fields = {}
        for key in ("temp_mean_c", "temp_daily_amp_c", "humidity_mean_pct",
                    "water_base_mm", "tds_base_ppm", "uv_peak_index"):
            fields[key] = _need(raw, key, float, errors, prefix)
        for key, (lo, hi) in _PROFILE_RANGES.items():
            value = fields.get(key)
            if value is not None and not (lo <= value <= hi):
                _err(errors, f"{prefix}{key}", f"{value} outside [{lo}, {hi}]")
        gas = raw.get("gas_base_ppm") or {}
        for g in ("co2", "nh3", "no", "no2"):
            v = gas.get(g)
            lo, hi = VALIDATION_TABLE[f"{g}_ppm"]
            if not isinstance(v, (int, float)) or not (lo <= v <= hi):
                _err(errors, f"{prefix}gas_base_ppm.{g}", f"must be in [{lo}, {hi}], got {v!r}")
        ped = raw.get("ped_density_profile")
        if not isinstance(ped, list) or len(ped) != 24:
            _err(errors, f"{prefix}ped_density_profile", "needs exactly 24 hourly rates")
        elif any(not isinstance(x, (int, float)) or x < 0 for x in ped):
            _err(errors, f"{prefix}ped_density_profile", "rates must be >= 0")
        rain = _windows(raw.get("rain_windows"), errors, f"{prefix}rain_windows")
        events = _windows(raw.get("event_windows"), errors, f"{prefix}event_windows")
        if hub_id is not None and not any(e.startswith(prefix) for e in errors):
            environments[hub_id] = EnvironmentProfile(
                hub_id=hub_id, gas_base_ppm={k: float(v) for k, v in gas.items()},
                ped_density_profile=[float(x) for x in ped],
                rain_windows=rain, event_windows=events,
                **{k: float(v) for k, v in fields.items()})
    for hub in hubs:
        if hub.hub_id not in environments:
            _err(errors, "environments", f"missing profile for hub {hub.hub_id!r}")

    devices: list[SimDevice] = []
    seen_euis: set[int] = set()
    type_names = {t.name for t in SensorType}
    for i, raw in enumerate(data.get("devices") or []):
        prefix = f"devices[{i}]."
        eui_text = _need(raw, "dev_eui", str, errors, prefix)
        stype = _need(raw, "sensor_type", str, errors, prefix)
        hub_id = _need(raw, "hub_id", str, errors, prefix)
        interval = _need(raw, "report_interval_s", int, errors, prefix)
        noise = _need(raw, "noise_sigma", float, errors, prefix, default=0.0)
        fault = _need(raw, "fault_rate", float, errors, prefix, default=0.0)
        depth = _need(raw, "bin_depth_mm", float, errors, prefix, default=1200.0)
        eui = None
        if eui_text is not None:
            try:
                eui = int(eui_text, 16)
                if len(eui_text) != 16:
                    raise ValueError
            except ValueError:
                _err(errors, f"{prefix}dev_eui", f"must be 16 hex chars, got {eui_text!r}")
                eui = None
        if eui is not None:
            if eui in seen_euis:
                _err(errors, f"{prefix}dev_eui", f"duplicate {eui_text}")
            seen_euis.add(eui)
        if stype is not None and stype not in type_names:
            _err(errors, f"{prefix}sensor_type", f"unknown type {stype!r}")
            stype = None
        if hub_id is not None and hub_id not in hub_ids:
            _err(errors, f"{prefix}hub_id", f"unknown hub {hub_id!r}")
        if interval is not None and interval < 1:
            _err(errors, f"{prefix}report_interval_s", "must be >= 1")
        if fault is not None and not (0.0 <= fault <= 1.0):
            _err(errors, f"{prefix}fault_rate", "must be a probability")
        if None not in (eui, stype, hub_id, interval) and interval >= 1:
            devices.append(SimDevice(
                dev_eui=eui, sensor_type=SensorType[stype], hub_id=hub_id,
                report_interval_s=int(interval), noise_sigma=float(noise),
                fault_rate=float(fault), bin_depth_mm=float(depth)))

    light_groups: list[LightGroupSpec] = []
    seen_groups: set[str] = set()
    for i, raw in enumerate(data.get("light_groups") or []):
        prefix = f"light_groups[{i}]."
        group_id = _need(raw, "group_id", str, errors, prefix)
        hub_id = _need(raw, "hub_id", str, errors, prefix)
        meter_text = _need(raw, "meter_eui", str, errors, prefix)
        p_max = _need(raw, "p_max_w", float, errors, prefix, default=100.0)
        interval = _need(raw, "metering_interval_s", int, errors, prefix, default=3600)
        meter = None
        if meter_text is not None:
            try:
                meter = int(meter_text, 16)
            except ValueError:
                _err(errors, f"{prefix}meter_eui", f"must be hex, got {meter_text!r}")
        if meter is not None:
            if meter in seen_euis:
                _err(errors, f"{prefix}meter_eui", f"duplicate {meter_text}")
            seen_euis.add(meter)
        if group_id is not None:
            if group_id in seen_groups:
                _err(errors, f"{prefix}group_id", f"duplicate {group_id!r}")
            seen_groups.add(group_id)
        if hub_id is not None and hub_id not in hub_ids:
            _err(errors, f"{prefix}hub_id", f"unknown hub {hub_id!r}")
        if None not in (group_id, hub_id, meter):
            light_groups.append(LightGroupSpec(group_id, hub_id, meter,
                                               float(p_max), int(interval)))

    if errors:
        raise ScenarioInvalid(sorted(set(errors)))
    return Scenario(
        name=name, seed=seed, epoch=epoch, duration_s=duration_s,
        speed_factor=float(speed_factor), hubs=hubs, environments=environments,
        devices=devices, light_groups=light_groups, channel=channel,
        daylight=daylight, detection=detection,
        thresholds=dict(data.get("thresholds") or {}),
        forecast=dict(data.get("forecast") or {}))


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return parse_scenario(data)


def default_scenario() -> Scenario:
    text = (importlib.resources.files("macip") / "data"
            / DEFAULT_SCENARIO_RESOURCE).read_text()
    return parse_scenario(yaml.safe_load(text))


def default_scenario_path() -> str:
    return str(importlib.resources.files("macip") / "data" / DEFAULT_SCENARIO_RESOURCE)


# ---- default scenario construction ------------------------------------------

_PARKING_PED = [2, 1, 1, 1, 1, 2, 6, 15, 35, 45, 40, 38,
                42, 40, 38, 36, 40, 45, 35, 20, 12, 8, 5, 3]
_TOURIST_PED = [4, 2, 1, 1, 1, 2, 5, 10, 18, 25, 32, 40,
                45, 42, 38, 35, 38, 48, 60, 70, 65, 40, 20, 8]

_HUB_NAMES = [
    ("Kings Place Parking", "parking"), ("Queen Street Parking", "parking"),
    ("York Street Parking", "parking"), ("Brunswick Street Parking", "parking"),
    ("Regent Street Parking", "parking"), ("Westmorland Parking", "parking"),
    ("Officers' Square", "tourist"), ("Boyce Farmers Market", "tourist"),
    ("Riverfront Trail", "tourist"), ("Science East", "tourist"),
]

_SENSOR_PLAN = [
    # (type, report_interval_s, noise_sigma, fault_rate)
    ("TempHumidity", 300, 0.010, 0.002),
    ("WaterLevel", 300, 0.010, 0.002),
    ("WaterQuality", 600, 0.020, 0.002),
    ("BinFill", 600, 0.010, 0.002),
    ("AirQuality", 300, 0.020, 0.002),
    ("UvIndex", 600, 0.050, 0.002),
]


def default_scenario_dict() -> dict:
    """Programmatic source of the packaged 10-hub Fredericton scenario."""
    hubs = []
    environments = []
    devices = []
    light_groups = []
    for i, (name, kind) in enumerate(_HUB_NAMES, start=1):
        hub_id = f"hub-{i:02d}"
        hubs.append({"hub_id": hub_id, "name": name, "kind": kind,
                     "lat": round(45.945 + 0.004 * i, 4),
                     "lon": round(-66.666 + 0.005 * i, 4)})
        ped_base = _PARKING_PED if kind == "parking" else _TOURIST_PED
        scale = 0.8 + 0.05 * i
        env = {
            "hub_id": hub_id,
            "temp_mean_c": round(18.0 + 0.3 * i, 2),
            "temp_daily_amp_c": round(5.0 + 0.2 * (i % 4), 2),
            "humidity_mean_pct": round(58.0 + 0.8 * i, 2),
            # hub-09 sits by the river: low sensor-to-water distance, floods in
            # sustained rain; the rest are well clear
            "water_base_mm": 620.0 if i == 9 else round(1150.0 + 40.0 * i, 1),
            "tds_base_ppm": round(280.0 + 6.0 * i, 1),
            # hub-03 is the downtown traffic hotspot: commute peaks push CO2
            # past the 1000 ppm warning threshold
            "gas_base_ppm": {"co2": 780.0 if i == 3 else round(420.0 + 12.0 * i, 1),
                             "nh3": round(10.0 + 0.5 * i, 1),
                             "no": round(7.0 + 0.4 * i, 1),
                             "no2": round(12.0 + 0.6 * i, 1)},
            "uv_peak_index": 7.0 if kind == "parking" else 8.0,
            "ped_density_profile": [round(r * scale, 2) for r in ped_base],
            "rain_windows": [[46800, 57600]],   # city-wide rain 13:00-16:00
            "event_windows": [[68400, 79200]] if i == 7 else [],  # concert 19-22
        }
        environments.append(env)
        for code, (stype, interval, noise, fault) in enumerate(_SENSOR_PLAN, start=1):
            spec = {"dev_eui": f"{0:08x}{i:04x}{code:04x}",
                    "sensor_type": stype, "hub_id": hub_id,
                    "report_interval_s": interval, "noise_sigma": noise,
                    "fault_rate": fault}
            if stype == "BinFill":
                spec["bin_depth_mm"] = 1200.0
            devices.append(spec)
        light_groups.append({"group_id": f"lg-{i:02d}", "hub_id": hub_id,
                             "meter_eui": f"{0:08x}{i:04x}{7:04x}",
                             "p_max_w": 120.0 if kind == "parking" else 100.0,
                             "metering_interval_s": 3600})
    return {
        "name": "fredericton-10-hub",
        "seed": 42,
        "epoch": "2025-06-01T00:00:00Z",
        "duration_s": 86400,
        "speed_factor": 60,
        "channel": {"loss_prob": 0.02, "dup_prob": 0.01},
        "daylight": {"start_hour": 6, "end_hour": 18},
        "detection": {"interval_s": 300, "abnormal_prob": 0.001},
        "thresholds": {"bin_fill_pct": 85.0, "flood_distance_mm": 400.0,
                       "co2_warn_ppm": 1000.0, "co2_crit_ppm": 2000.0,
                       "cooldown_s": 1800, "escalation_after_s": 600,
                       "silent_factor": 3.0},
        # 100 epochs sharpens the day/night on-off boundary in the learned
        # energy profile; training only starts once 48h of history exists
        "forecast": {"window_len": 24, "learning_rate": 0.01, "epochs": 100,
                     "clip_norm": 5.0, "hidden_size": 16, "batch_size": 32},
        "hubs": hubs,
        "environments": environments,
        "devices": devices,
        "light_groups": light_groups,
    }


def write_default_scenario(path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(default_scenario_dict(), fh, sort_keys=False, width=100)

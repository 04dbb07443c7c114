"""Simulated sensor fleet: ground-truth urban signals per hub, noisy sensor
reads, and uplink frame production with a LoRaWAN-style duty-cycle limit.

Everything here is deterministic given (profile, t) and the per-device RNG
stream, so a scenario replays byte-identically under the same seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .codec import SensorType, UplinkFrame, channels_for
from .util import clamp

SPEED_OF_SOUND_M_S = 343.0
FRAME_AIRTIME_S = 0.06   # nominal on-air time per uplink
DUTY_CYCLE = 0.01        # 1% channel occupancy cap
BIN_DEADZONE_MM = 20     # ultrasonic blind zone below the sensor
BIN_EMPTY_HOUR = 6       # bins emptied daily at 06:00 scenario-local


class DutyCycleViolation(Exception):
    """Raised when a device is asked to transmit before its off-time elapsed."""


@dataclass
class EnvironmentProfile:
    """Per-hub ground-truth parameters for the synthetic urban environment."""
    hub_id: str
    temp_mean_c: float
    temp_daily_amp_c: float
    humidity_mean_pct: float
    water_base_mm: float
    tds_base_ppm: float
    gas_base_ppm: dict[str, float]          # keys co2, nh3, no, no2
    uv_peak_index: float
    ped_density_profile: list[float]        # 24 hourly rates, persons/hour
    rain_windows: list[tuple[int, int]] = field(default_factory=list)
    event_windows: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.ped_density_profile) != 24:
            raise ValueError(f"{self.hub_id}: ped_density_profile needs 24 entries, "
                             f"got {len(self.ped_density_profile)}")
        if any(r < 0 for r in self.ped_density_profile):
            raise ValueError(f"{self.hub_id}: negative pedestrian rate")


@dataclass
class SimDevice:
    dev_eui: int
    sensor_type: SensorType
    hub_id: str
    report_interval_s: int
    noise_sigma: float = 0.0
    fault_rate: float = 0.0
    bin_depth_mm: float = 1000.0   # BinFill only
    fcnt: int = 0
    earliest_tx_s: float = 0.0

    def __post_init__(self):
        if self.report_interval_s < 1:
            raise ValueError("report_interval_s must be >= 1")

    @property
    def eui_hex(self) -> str:
        return f"{self.dev_eui:016x}"


@dataclass
class GroundTruth:
    sim_time_s: int
    temp_c: float
    rh_pct: float
    water_distance_mm: float
    tds_ppm: float
    gas_ppm: dict[str, float]
    uv_index: int
    bin_fill_frac: float
    ped_rate_per_hour: float
    is_raining: bool
    is_event: bool


@dataclass
class SensorSample:
    dev_eui: int
    sensor_type: SensorType
    sim_time_s: int
    values: dict[str, float]


def _in_windows(t: int, windows: list[tuple[int, int]]) -> bool:
    return any(start <= t < end for start, end in windows)


def _commute_factor(hour: float) -> float:
    """Traffic proxy in [0, ~1]: gaussian bumps around 08:30 and 17:30."""
    out = 0.0
    for peak in (8.5, 17.5):
        d = min(abs(hour - peak), 24 - abs(hour - peak))
        out += math.exp(-(d * d) / (2 * 2.0 * 2.0))
    return out


def sample_environment(profile: EnvironmentProfile, t: int) -> GroundTruth:
    """Ground truth at sim-time t. Pure function of (profile, t)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    hour = (t / 3600.0) % 24.0
    raining = _in_windows(t, profile.rain_windows)
    event = _in_windows(t, profile.event_windows)

    temp = profile.temp_mean_c + profile.temp_daily_amp_c * math.sin(2 * math.pi * (hour - 9) / 24)
    rh = clamp(profile.humidity_mean_pct
               - 12.0 * math.sin(2 * math.pi * (hour - 9) / 24)
               + (15.0 if raining else 0.0), 5.0, 100.0)

    # Water level rises (sensor-to-surface distance shrinks) as rain progresses.
    distance = profile.water_base_mm
    for start, end in profile.rain_windows:
        if start <= t < end:
            distance = profile.water_base_mm - 350.0 * (t - start) / max(1, end - start)
            break
    distance = max(BIN_DEADZONE_MM, distance)

    tds = max(0.0, profile.tds_base_ppm
              + 40.0 * math.sin(2 * math.pi * (hour - 3) / 24)
              - (80.0 if raining else 0.0))

    traffic = _commute_factor(hour)
    gas = {name: base * (1.0 + 0.4 * traffic) for name, base in profile.gas_base_ppm.items()}

    uv = int(round(profile.uv_peak_index * max(0.0, math.sin(math.pi * (hour - 6) / 12))))

    fill_frac = ((t - BIN_EMPTY_HOUR * 3600) % 86400) / 86400.0

    rate = profile.ped_density_profile[int(hour)] * (3.0 if event else 1.0)

    return GroundTruth(
        sim_time_s=t, temp_c=temp, rh_pct=rh, water_distance_mm=distance,
        tds_ppm=tds, gas_ppm=gas, uv_index=uv, bin_fill_frac=fill_frac,
        ped_rate_per_hour=rate, is_raining=raining, is_event=event)


def _truth_channels(device: SimDevice, truth: GroundTruth) -> dict[str, float]:
    st = device.sensor_type
    if st is SensorType.TempHumidity:
        return {"temp_c": truth.temp_c, "rh_pct": truth.rh_pct}
    if st is SensorType.WaterLevel:
        return {"distance_mm": truth.water_distance_mm}
    if st is SensorType.WaterQuality:
        return {"tds_ppm": truth.tds_ppm}
    if st is SensorType.BinFill:
        span = device.bin_depth_mm - BIN_DEADZONE_MM
        return {"distance_mm": device.bin_depth_mm - truth.bin_fill_frac * span}
    if st is SensorType.AirQuality:
        return {"co2_ppm": truth.gas_ppm["co2"], "nh3_ppm": truth.gas_ppm["nh3"],
                "no_ppm": truth.gas_ppm["no"], "no2_ppm": truth.gas_ppm["no2"]}
    if st is SensorType.UvIndex:
        return {"uv_index": float(truth.uv_index)}
    raise ValueError(f"{st.name} has no environment ground truth")


def read_sensor(device: SimDevice, truth: GroundTruth, rng: random.Random) -> SensorSample:
    """One noisy sensor report. Consumes a fixed number of RNG draws per call
    (one gaussian per channel plus one uniform for the fault roll) so the
    per-device stream stays aligned whatever the parameter values."""
    ideal = _truth_channels(device, truth)
    values = {}
    for channel in channels_for(device.sensor_type):
        v = ideal[channel]
        values[channel] = v + rng.gauss(0.0, device.noise_sigma * abs(v))
    if rng.random() < device.fault_rate:
        values = {ch: v * 10.0 for ch, v in values.items()}
    return SensorSample(device.dev_eui, device.sensor_type, truth.sim_time_s, values)


def ultrasonic_distance(echo_time_us: float) -> int:
    """Echo time to target distance in mm (round trip at 343 m/s)."""
    if echo_time_us <= 0:
        raise ValueError("echo_time_us must be > 0")
    mm = SPEED_OF_SOUND_M_S * (echo_time_us * 1e-6) / 2.0 * 1000.0
    return math.floor(mm + 0.5)


def echo_time_us(distance_mm: float) -> float:
    """Inverse of ultrasonic_distance; round-trips within 1 us."""
    return distance_mm / 1000.0 * 2.0 / SPEED_OF_SOUND_M_S * 1e6


def bin_fill_percent(distance_mm: float, bin_depth_mm: float,
                     deadzone_mm: float = BIN_DEADZONE_MM) -> float:
    if bin_depth_mm <= deadzone_mm:
        raise ValueError("bin_depth_mm must exceed the deadzone")
    frac = (bin_depth_mm - distance_mm) / (bin_depth_mm - deadzone_mm)
    return clamp(frac, 0.0, 1.0) * 100.0


def next_uplink(device: SimDevice, sample: SensorSample) -> UplinkFrame:
    """Wrap a sample into the next frame for this device, advancing fcnt and
    the duty-cycle gate."""
    now = sample.sim_time_s
    if now < device.earliest_tx_s:
        raise DutyCycleViolation(
            f"{device.eui_hex}: tx at {now}, allowed from {device.earliest_tx_s}")
    device.fcnt = (device.fcnt + 1) & 0xFFFF
    device.earliest_tx_s = now + max(device.report_interval_s, FRAME_AIRTIME_S / DUTY_CYCLE)
    return UplinkFrame.build(device.sensor_type, device.dev_eui, device.fcnt,
                             now, sample.values)

"""Edge gateway: frame intake, duplicate suppression, spike/noise filtering
and range validation, with batched forwarding toward the core store.

Filter order is fixed: median-of-5 kills isolated spikes before they can
poison the EMA, and the range check runs last so it sees smoothed values.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

from . import codec
from .codec import SensorType, UplinkFrame

DEDUP_WINDOW = 128          # fcnt look-ahead accepted as "new" under 16-bit wrap
MEDIAN_WINDOW = 5
EMA_ALPHA = 0.2
SPIKE_RATIO = 2.0           # raw further than this factor from the median is a spike

# Metered counters are exact deltas, not jittery analog channels: smoothing
# them would smear real consumption across hours, so they pass through.
CHANNEL_FILTER_OVERRIDES: dict[str, tuple[int, float]] = {
    "energy_wh": (1, 1.0),   # (median window, EMA alpha)
}

QUALITY_OK = "ok"
QUALITY_SPIKE = "spike_removed"

# Acceptable engineering ranges per channel (device datasheet scale).
VALIDATION_TABLE: dict[str, tuple[float, float]] = {
    "temp_c": (-40.0, 80.0),
    "rh_pct": (0.0, 100.0),
    "distance_mm": (20.0, 4000.0),
    "tds_ppm": (0.0, 2000.0),
    "co2_ppm": (0.0, 5000.0),
    "nh3_ppm": (0.0, 5000.0),
    "no_ppm": (0.0, 5000.0),
    "no2_ppm": (0.0, 5000.0),
    "uv_index": (0.0, 11.0),
    "energy_wh": (0.0, 1_000_000.0),
}

REASON_DUPLICATE = "duplicate"
REASON_OUT_OF_RANGE = "out_of_range"

_DECODE_REASONS = {
    codec.BadMagic: "bad_magic",
    codec.TruncatedFrame: "truncated",
    codec.UnknownSensorType: "unknown_sensor_type",
    codec.LengthMismatch: "length_mismatch",
    codec.CrcMismatch: "crc_mismatch",
}


@dataclass
class SensorReading:
    """One validated, engineering-unit measurement on its way to the core."""
    dev_eui: int
    sensor_type: SensorType
    channel: str
    sim_time_s: int
    raw: float
    filtered: float
    quality: str = QUALITY_OK

    @property
    def eui_hex(self) -> str:
        return f"{self.dev_eui:016x}"


@dataclass
class Accepted:
    readings: list[SensorReading]


@dataclass
class Rejected:
    reason: str
    dev_eui: int | None = None   # known only when the frame decoded


def median_filter(window: list[float]) -> float:
    """Median of up to the last 5 raw values; mean of the middle pair when even."""
    if not window:
        raise ValueError("median_filter needs a non-empty window")
    ordered = sorted(window)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def ema_smooth(prev: float | None, x: float, alpha: float = EMA_ALPHA) -> float:
    if prev is None:
        return x
    return alpha * x + (1.0 - alpha) * prev


def dedup_outcome(last_fcnt: int | None, fcnt: int) -> str:
    """'accept' iff fcnt is 1..DEDUP_WINDOW ahead of last under 16-bit wrap."""
    if last_fcnt is None:
        return "accept"
    dist = (fcnt - last_fcnt) & 0xFFFF
    if dist == 0:
        return "duplicate"
    if dist <= DEDUP_WINDOW:
        return "accept"
    return "replay"


@dataclass
class Gateway:
    """Single-gateway state; frames for one device must arrive serially."""
    batch_max: int = 32
    batch_max_age_s: float = 10.0
    ema_alpha: float = EMA_ALPHA

    last_fcnt: dict[int, int] = field(default_factory=dict)
    windows: dict[tuple[int, str], deque] = field(default_factory=dict)
    ema: dict[tuple[int, str], float] = field(default_factory=dict)
    batch: list[SensorReading] = field(default_factory=list)
    frames_accepted: int = 0
    frames_rejected: Counter = field(default_factory=Counter)

    def accept_frame(self, data: bytes, now: float) -> Accepted | Rejected:
        try:
            frame = codec.decode_frame(data)
        except codec.CodecError as err:
            return self._reject(_DECODE_REASONS[type(err)], None)

        outcome = dedup_outcome(self.last_fcnt.get(frame.dev_eui), frame.fcnt)
        if outcome != "accept":
            # replayed frames surface under the duplicate reason as well
            return self._reject(REASON_DUPLICATE, frame.dev_eui)
        self.last_fcnt[frame.dev_eui] = frame.fcnt

        readings = [self._filter_channel(frame, ch, raw)
                    for ch, raw in frame.values.items()]
        for r in readings:
            lo, hi = VALIDATION_TABLE[r.channel]
            if not (lo <= r.filtered <= hi):
                return self._reject(REASON_OUT_OF_RANGE, frame.dev_eui)
        self.batch.extend(readings)
        self.frames_accepted += 1
        return Accepted(readings)

    def _filter_channel(self, frame: UplinkFrame, channel: str, raw: float) -> SensorReading:
        key = (frame.dev_eui, channel)
        median_len, alpha = CHANNEL_FILTER_OVERRIDES.get(
            channel, (MEDIAN_WINDOW, self.ema_alpha))
        window = self.windows.get(key)
        if window is None:
            window = self.windows[key] = deque(maxlen=median_len)
        window.append(raw)
        med = median_filter(list(window))
        quality = QUALITY_OK
        if abs(raw - med) > SPIKE_RATIO * max(abs(med), 1.0):
            quality = QUALITY_SPIKE
        smoothed = ema_smooth(self.ema.get(key), med, alpha)
        self.ema[key] = smoothed
        return SensorReading(frame.dev_eui, frame.sensor_type, channel,
                             frame.timestamp_s, raw, smoothed, quality)

    def _reject(self, reason: str, dev_eui: int | None) -> Rejected:
        self.frames_rejected[reason] += 1
        return Rejected(reason, dev_eui)

    def flush_batch(self, now: float) -> list[SensorReading] | None:
        """Release the pending batch when it is full or its oldest entry aged out."""
        if not self.batch:
            return None
        oldest = min(r.sim_time_s for r in self.batch)
        if len(self.batch) >= self.batch_max or now - oldest >= self.batch_max_age_s:
            return self._drain()
        return None

    def force_flush(self) -> list[SensorReading] | None:
        """Unconditional flush, used at end of run."""
        return self._drain() if self.batch else None

    def _drain(self) -> list[SensorReading]:
        out = sorted(self.batch, key=lambda r: (r.sim_time_s, r.dev_eui, r.channel))
        self.batch = []
        return out

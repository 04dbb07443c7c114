"""Core store: device registry, in-memory time-series index, and an
append-only persistent log with replay recovery.

Log framing: 4-byte big-endian payload length, JSON payload, CRC-16 of the
payload (same CRC as the uplink codec). A torn tail is detected and dropped
on recovery; a bad record with complete records after it refuses startup.
"""

from __future__ import annotations

import json
import struct
import threading
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

from .codec import crc16

RECORD_READING = "reading"
RECORD_ALERT = "alert"
RECORD_LIGHT = "light_state"
RECORD_COMMAND = "command"
RECORD_REJECTION = "rejection"   # keeps per-device health counters durable

_MAX_RECORD_LEN = 1 << 20

AGGREGATIONS = ("raw", "mean_1h", "max_1h", "sum_1h")
HOUR = 3600


class StoreError(Exception):
    pass


class AlreadyRegistered(StoreError):
    pass


class UnknownDevice(StoreError):
    pass


class UnknownSeries(StoreError):
    pass


class CorruptRecord(StoreError):
    pass


@dataclass
class DeviceRecord:
    dev_eui: str                  # 16-char hex
    sensor_type: str
    hub_id: str
    label: str = ""
    registered_at: int = 0
    last_seen: int | None = None
    rejected_counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "dev_eui": self.dev_eui, "sensor_type": self.sensor_type,
            "hub_id": self.hub_id, "label": self.label,
            "registered_at": self.registered_at, "last_seen": self.last_seen,
            "rejected_counts": dict(sorted(self.rejected_counts.items())),
        }


def encode_record(payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + payload + struct.pack(">H", crc16(payload))


def iter_records(blob: bytes):
    """Yield (seq-ordered) payload bytes; raise CorruptRecord for mid-log
    damage; silently drop a torn tail."""
    off = 0
    n = len(blob)
    while off < n:
        if n - off < 4:
            return  # torn tail: partial length prefix
        (length,) = struct.unpack(">I", blob[off:off + 4])
        if length > _MAX_RECORD_LEN:
            raise CorruptRecord(f"record at byte {off}: implausible length {length}")
        end = off + 4 + length + 2
        if end > n:
            return  # torn tail: record extends past EOF
        payload = blob[off + 4:off + 4 + length]
        (got,) = struct.unpack(">H", blob[end - 2:end])
        if crc16(payload) != got:
            if end == n:
                return  # torn tail: final record damaged mid-write
            raise CorruptRecord(f"record at byte {off}: CRC mismatch")
        yield payload
        off = end


class CoreStore:
    """Single-writer store: readers take the same lock briefly per query."""

    def __init__(self):
        self._lock = threading.RLock()
        self.devices: dict[str, DeviceRecord] = {}
        self._entities: set[str] = set()
        self._series: dict[tuple[str, str], tuple[list[int], list[float]]] = {}
        self._seq = 0
        self.out_of_order_dropped = 0
        self._log = None
        self._log_path: Path | None = None

    # ---- persistence -----------------------------------------------------

    def attach_log(self, path: str | Path, truncate: bool = True) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._log = open(path, "wb" if truncate else "ab")
        self._log_path = path

    def close(self) -> None:
        with self._lock:
            if self._log is not None:
                self._log.flush()
                self._log.close()
                self._log = None

    def flush(self) -> None:
        with self._lock:
            if self._log is not None:
                self._log.flush()

    def log_append(self, record_type: str, data: dict) -> int:
        """Append one record; returns its seq. No-op seq advance without a log."""
        with self._lock:
            self._seq += 1
            if self._log is not None:
                payload = json.dumps(
                    {"seq": self._seq, "type": record_type, "data": data},
                    sort_keys=True, separators=(",", ":")).encode()
                self._log.write(encode_record(payload))
            return self._seq

    def replay_log(self, path: str | Path) -> dict[str, list[dict]]:
        """Rebuild series/health from a log written by a previous run.

        Returns the non-reading payloads (alerts, light states, commands)
        for the owning engines to rebuild from. Must be called after the
        scenario's devices/entities are registered.
        """
        blob = Path(path).read_bytes()
        extras: dict[str, list[dict]] = {
            RECORD_ALERT: [], RECORD_LIGHT: [], RECORD_COMMAND: []}
        expected_seq = 0
        for payload in iter_records(blob):
            record = json.loads(payload)
            expected_seq += 1
            if record["seq"] != expected_seq:
                raise CorruptRecord(
                    f"seq gap: expected {expected_seq}, found {record['seq']}")
            rtype, data = record["type"], record["data"]
            if rtype == RECORD_READING:
                self._apply_reading(data)
            elif rtype == RECORD_REJECTION:
                self._apply_rejection(data)
            elif rtype in extras:
                extras[rtype].append(data)
            else:
                raise CorruptRecord(f"unknown record type {rtype!r}")
        self._seq = expected_seq
        return extras

    def _apply_reading(self, data: dict) -> None:
        self._append_unlogged(data["entity"], data["channel"], data["t"],
                              data["value"], raw=data.get("raw"),
                              quality=data.get("quality", "ok"))

    def _apply_rejection(self, data: dict) -> None:
        dev = self.devices.get(data.get("entity") or "")
        if dev is not None:
            reason = data["reason"]
            dev.rejected_counts[reason] = dev.rejected_counts.get(reason, 0) + 1

    # ---- registry ----------------------------------------------------------

    def register_device(self, record: DeviceRecord) -> None:
        with self._lock:
            if record.dev_eui in self.devices:
                raise AlreadyRegistered(record.dev_eui)
            self.devices[record.dev_eui] = record
            self._entities.add(record.dev_eui)

    def register_entity(self, entity_id: str) -> None:
        """Register a non-device series owner (a hub, a light group)."""
        with self._lock:
            self._entities.add(entity_id)

    def list_devices(self) -> list[DeviceRecord]:
        with self._lock:
            return [self.devices[k] for k in sorted(self.devices)]

    def record_rejection(self, dev_eui: str | None, reason: str, t: int) -> None:
        with self._lock:
            if dev_eui is not None and dev_eui in self.devices:
                dev = self.devices[dev_eui]
                dev.rejected_counts[reason] = dev.rejected_counts.get(reason, 0) + 1
            self.log_append(RECORD_REJECTION, {"entity": dev_eui, "reason": reason, "t": t})

    # ---- ingestion ---------------------------------------------------------

    def append_points(self, batch) -> int:
        """Append a gateway batch. Every reading's device must be registered;
        out-of-order points are dropped per-point and counted."""
        with self._lock:
            for r in batch:
                if r.eui_hex not in self.devices:
                    raise UnknownDevice(r.eui_hex)
            appended = 0
            for r in batch:
                if self._append_unlogged(r.eui_hex, r.channel, r.sim_time_s,
                                         r.filtered, raw=r.raw, quality=r.quality):
                    self.log_append(RECORD_READING, {
                        "entity": r.eui_hex, "channel": r.channel, "t": r.sim_time_s,
                        "value": r.filtered, "raw": r.raw, "quality": r.quality})
                    appended += 1
            return appended

    def append_reading(self, entity_id: str, channel: str, t: int, value: float,
                       raw: float | None = None, quality: str = "ok") -> bool:
        """Append one point for any registered entity (hub counters etc.)."""
        with self._lock:
            if entity_id not in self._entities:
                raise UnknownDevice(entity_id)
            if self._append_unlogged(entity_id, channel, t, value, raw=raw, quality=quality):
                self.log_append(RECORD_READING, {
                    "entity": entity_id, "channel": channel, "t": t,
                    "value": value, "raw": raw, "quality": quality})
                return True
            return False

    def _append_unlogged(self, entity_id: str, channel: str, t: int, value: float,
                         raw: float | None = None, quality: str = "ok") -> bool:
        key = (entity_id, channel)
        series = self._series.get(key)
        if series is None:
            series = self._series[key] = ([], [])
        times, values = series
        if times and t <= times[-1]:
            self.out_of_order_dropped += 1
            return False
        times.append(t)
        values.append(value)
        dev = self.devices.get(entity_id)
        if dev is not None:
            dev.last_seen = t if dev.last_seen is None else max(dev.last_seen, t)
        return True

    # ---- queries -----------------------------------------------------------

    def channels(self, entity_id: str) -> list[str]:
        with self._lock:
            return sorted(ch for (e, ch) in self._series if e == entity_id)

    def series_keys(self) -> list[tuple[str, str]]:
        with self._lock:
            return sorted(self._series.keys())

    def query_range(self, entity_id: str, channel: str, t_from: int, t_to: int,
                    agg: str = "raw") -> list[tuple[int, float]]:
        if t_from > t_to:
            raise ValueError("from must be <= to")
        if agg not in AGGREGATIONS:
            raise ValueError(f"agg must be one of {AGGREGATIONS}")
        with self._lock:
            if entity_id not in self._entities:
                raise UnknownSeries(entity_id)
            series = self._series.get((entity_id, channel))
            if series is None:
                return []
            times, values = series
            lo = bisect_left(times, t_from)
            hi = bisect_left(times, t_to)
            points = [(times[i], values[i]) for i in range(lo, hi)]
        if agg == "raw":
            return points
        return _aggregate_hourly(points, agg)


def _aggregate_hourly(points: list[tuple[int, float]], agg: str) -> list[tuple[int, float]]:
    out: list[tuple[int, float]] = []
    bucket_t: int | None = None
    acc: list[float] = []
    for t, v in points:
        b = (t // HOUR) * HOUR
        if b != bucket_t:
            if bucket_t is not None:
                out.append((bucket_t, _finish(acc, agg)))
            bucket_t, acc = b, []
        acc.append(v)
    if bucket_t is not None:
        out.append((bucket_t, _finish(acc, agg)))
    return out


def _finish(acc: list[float], agg: str) -> float:
    if agg == "mean_1h":
        return sum(acc) / len(acc)
    if agg == "max_1h":
        return max(acc)
    return sum(acc)  # sum_1h

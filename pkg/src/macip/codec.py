"""Binary uplink frame codec and the lossy device-to-gateway channel.

Frame layout (all integers big-endian):

    [0]        magic 0xC7
    [1]        (battery_low << 4) | sensor_type code
    [2:10]     dev_eui, 8 bytes
    [10:12]    fcnt, uint16
    [12:16]    timestamp, uint32 seconds since scenario epoch
    [16]       payload length L
    [17:17+L]  payload, fixed layout per sensor type
    [-2:]      CRC-16/CCITT-FALSE over all preceding bytes

The payload table below is normative and bit-exact; every value is stored
as a scaled integer and decoded back by the same scale, so a frame built
from quantized engineering values round-trips exactly.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from enum import IntEnum

FRAME_MAGIC = 0xC7
HEADER_LEN = 17  # magic .. payload_len byte
CRC_LEN = 2


class SensorType(IntEnum):
    TempHumidity = 0x01
    WaterLevel = 0x02
    WaterQuality = 0x03
    BinFill = 0x04
    AirQuality = 0x05
    UvIndex = 0x06
    EnergyMeter = 0x07


@dataclass(frozen=True)
class PayloadField:
    channel: str
    fmt: str      # struct format char, big-endian applied separately
    scale: int    # engineering value = raw_int / scale


# Normative payload layouts. Order matters: fields are packed in sequence.
PAYLOAD_LAYOUT: dict[SensorType, tuple[PayloadField, ...]] = {
    SensorType.TempHumidity: (
        PayloadField("temp_c", "h", 100),   # centi-degC, signed
        PayloadField("rh_pct", "H", 10),    # deci-%RH
    ),
    SensorType.WaterLevel: (PayloadField("distance_mm", "H", 1),),
    SensorType.WaterQuality: (PayloadField("tds_ppm", "H", 1),),
    SensorType.BinFill: (PayloadField("distance_mm", "H", 1),),
    SensorType.AirQuality: (
        PayloadField("co2_ppm", "H", 1),
        PayloadField("nh3_ppm", "H", 1),
        PayloadField("no_ppm", "H", 1),
        PayloadField("no2_ppm", "H", 1),
    ),
    SensorType.UvIndex: (PayloadField("uv_index", "B", 1),),
    SensorType.EnergyMeter: (PayloadField("energy_wh", "I", 1),),
}

_STRUCT_RANGE = {
    "b": (-(1 << 7), (1 << 7) - 1),
    "B": (0, (1 << 8) - 1),
    "h": (-(1 << 15), (1 << 15) - 1),
    "H": (0, (1 << 16) - 1),
    "i": (-(1 << 31), (1 << 31) - 1),
    "I": (0, (1 << 32) - 1),
}


def payload_len(sensor_type: SensorType) -> int:
    return sum(struct.calcsize(">" + f.fmt) for f in PAYLOAD_LAYOUT[sensor_type])


def channels_for(sensor_type: SensorType) -> tuple[str, ...]:
    return tuple(f.channel for f in PAYLOAD_LAYOUT[sensor_type])


class CodecError(Exception):
    """Base for all frame encode/decode failures."""


class BadMagic(CodecError):
    pass


class TruncatedFrame(CodecError):
    pass


class UnknownSensorType(CodecError):
    pass


class LengthMismatch(CodecError):
    pass


class CrcMismatch(CodecError):
    pass


class InvalidPayloadLength(CodecError):
    pass


def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
        table.append(crc)
    return table


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[((crc >> 8) ^ b) & 0xFF]
    return crc


def quantize_value(sensor_type: SensorType, channel: str, value: float) -> float:
    """Snap an engineering value onto the payload grid for its channel."""
    for f in PAYLOAD_LAYOUT[sensor_type]:
        if f.channel == channel:
            lo, hi = _STRUCT_RANGE[f.fmt]
            raw = min(hi, max(lo, int(round(value * f.scale))))
            return raw / f.scale
    raise KeyError(f"{sensor_type.name} has no channel {channel!r}")


def quantize_values(sensor_type: SensorType, values: dict[str, float]) -> dict[str, float]:
    return {f.channel: quantize_value(sensor_type, f.channel, values[f.channel])
            for f in PAYLOAD_LAYOUT[sensor_type]}


@dataclass
class UplinkFrame:
    sensor_type: SensorType
    dev_eui: int            # uint64
    fcnt: int               # uint16
    timestamp_s: int        # uint32, seconds since scenario epoch
    values: dict[str, float]
    battery_low: bool = False

    @classmethod
    def build(cls, sensor_type: SensorType, dev_eui: int, fcnt: int,
              timestamp_s: int, values: dict[str, float],
              battery_low: bool = False) -> "UplinkFrame":
        """Construct a frame with values quantized to the payload grid."""
        return cls(sensor_type, dev_eui, fcnt & 0xFFFF, int(timestamp_s),
                   quantize_values(sensor_type, values), battery_low)

    @property
    def eui_hex(self) -> str:
        return f"{self.dev_eui:016x}"


def encode_frame(frame: UplinkFrame) -> bytes:
    """Serialize a frame to wire bytes. Values are quantized on the way out."""
    layout = PAYLOAD_LAYOUT.get(frame.sensor_type)
    if layout is None:
        raise UnknownSensorType(f"code {frame.sensor_type}")
    missing = [f.channel for f in layout if f.channel not in frame.values]
    if missing:
        raise InvalidPayloadLength(f"missing channels {missing} for {frame.sensor_type.name}")

    payload = bytearray()
    for f in layout:
        lo, hi = _STRUCT_RANGE[f.fmt]
        raw = min(hi, max(lo, int(round(frame.values[f.channel] * f.scale))))
        payload += struct.pack(">" + f.fmt, raw)

    head = bytearray()
    head.append(FRAME_MAGIC)
    head.append(((1 if frame.battery_low else 0) << 4) | (int(frame.sensor_type) & 0x0F))
    head += struct.pack(">Q", frame.dev_eui & 0xFFFFFFFFFFFFFFFF)
    head += struct.pack(">H", frame.fcnt & 0xFFFF)
    head += struct.pack(">I", frame.timestamp_s & 0xFFFFFFFF)
    head.append(len(payload))
    head += payload
    head += struct.pack(">H", crc16(bytes(head)))
    return bytes(head)


def decode_frame(data: bytes) -> UplinkFrame:
    """Parse wire bytes back into a frame; every malformation raises a distinct error."""
    if len(data) < HEADER_LEN + CRC_LEN:
        raise TruncatedFrame(f"{len(data)} bytes")
    if data[0] != FRAME_MAGIC:
        raise BadMagic(f"0x{data[0]:02x}")
    code = data[1] & 0x0F
    battery_low = bool((data[1] >> 4) & 0x01)
    try:
        sensor_type = SensorType(code)
    except ValueError:
        raise UnknownSensorType(f"code 0x{code:02x}") from None
    declared = data[16]
    expected = payload_len(sensor_type)
    if declared != expected:
        raise LengthMismatch(f"{sensor_type.name}: declared {declared}, expected {expected}")
    total = HEADER_LEN + declared + CRC_LEN
    if len(data) < total:
        raise TruncatedFrame(f"{len(data)} bytes, need {total}")
    if len(data) > total:
        raise LengthMismatch(f"{len(data)} bytes, frame is {total}")
    (got_crc,) = struct.unpack(">H", data[total - CRC_LEN:total])
    if crc16(data[:total - CRC_LEN]) != got_crc:
        raise CrcMismatch(f"frame for eui {data[2:10].hex()}")

    (dev_eui,) = struct.unpack(">Q", data[2:10])
    (fcnt,) = struct.unpack(">H", data[10:12])
    (timestamp_s,) = struct.unpack(">I", data[12:16])
    values = {}
    off = HEADER_LEN
    for f in PAYLOAD_LAYOUT[sensor_type]:
        size = struct.calcsize(">" + f.fmt)
        (raw,) = struct.unpack(">" + f.fmt, data[off:off + size])
        values[f.channel] = raw / f.scale
        off += size
    return UplinkFrame(sensor_type, dev_eui, fcnt, timestamp_s, values, battery_low)


@dataclass
class ChannelState:
    """Lossy, duplicating (never corrupting) link between one device and its gateway."""
    loss_prob: float = 0.0
    dup_prob: float = 0.0
    rng: random.Random = field(default_factory=random.Random)

    def __post_init__(self):
        if not (0.0 <= self.loss_prob <= 1.0 and 0.0 <= self.dup_prob <= 1.0):
            raise ValueError("loss_prob and dup_prob must be in [0, 1]")


def channel_transmit(data: bytes, ch: ChannelState) -> list[bytes]:
    """Deliver zero, one or two identical copies of the frame.

    Both uniform draws happen on every send so the per-device stream
    consumes a fixed amount of randomness regardless of outcome.
    """
    lost = ch.rng.random() < ch.loss_prob
    duplicated = ch.rng.random() < ch.dup_prob
    if lost:
        return []
    return [data, data] if duplicated else [data]

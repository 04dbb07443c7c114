"""Street-light group control: deterministic intensity policy, operator
overrides with TTL, and energy metering that feeds the standard ingestion
path as EnergyMeter readings."""

from __future__ import annotations

from dataclasses import dataclass, field

from .util import clamp

MODE_AUTO = "auto"
MODE_OVERRIDE = "override"

DEFAULT_METERING_INTERVAL_S = 3600


class UnknownGroup(KeyError):
    pass


class InvalidValue(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    """Intensity policy constants; scenario-overridable."""
    base_pct: float = 40.0
    ped_gain_pct: float = 50.0
    ped_ref: float = 20.0
    rain_bonus_pct: float = 10.0
    night_floor_pct: float = 20.0


@dataclass
class PolicyContext:
    sim_time_s: int
    is_daylight: bool
    ped_count_last_interval: float
    is_raining: bool
    is_event: bool

    def __post_init__(self):
        if self.ped_count_last_interval < 0:
            raise ValueError("ped_count must be >= 0")


def compute_intensity(ctx: PolicyContext, cfg: PolicyConfig = PolicyConfig()) -> float:
    """Events force full brightness; daylight turns lights off; otherwise the
    base level rises with pedestrian presence (saturating at ped_ref) and rain."""
    if ctx.is_event:
        return 100.0
    if ctx.is_daylight:
        return 0.0
    raw = (cfg.base_pct
           + cfg.ped_gain_pct * min(ctx.ped_count_last_interval / cfg.ped_ref, 1.0)
           + (cfg.rain_bonus_pct if ctx.is_raining else 0.0))
    return clamp(raw, cfg.night_floor_pct, 100.0)


@dataclass
class MeterEmission:
    group_id: str
    sim_time_s: int
    energy_wh: float    # delta since the previous emission


@dataclass
class LightGroup:
    group_id: str
    hub_id: str
    p_max_w: float = 100.0
    metering_interval_s: int = DEFAULT_METERING_INTERVAL_S
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    intensity_pct: float = 0.0
    mode: str = MODE_AUTO
    override_value: float | None = None
    override_expires: int | None = None
    cum_energy_wh: float = 0.0
    _last_meter_t: int = 0
    _last_meter_cum: float = 0.0

    def apply_override(self, value: float, ttl_s: int, now: int) -> None:
        if not (0.0 <= value <= 100.0):
            raise InvalidValue(f"intensity {value} outside [0, 100]")
        if ttl_s <= 0:
            raise InvalidValue("ttl_s must be > 0")
        self.mode = MODE_OVERRIDE
        self.override_value = float(value)
        self.override_expires = now + int(ttl_s)

    def clear_override(self) -> None:
        self.mode = MODE_AUTO
        self.override_value = None
        self.override_expires = None

    def power_w(self, intensity_pct: float) -> float:
        # 10% driver/ballast floor whenever the lamp is on
        if intensity_pct <= 0.0:
            return 0.0
        return self.p_max_w * (0.1 + 0.9 * intensity_pct / 100.0)

    def tick(self, ctx: PolicyContext, dt_s: float) -> MeterEmission | None:
        """Advance one control step ending at ctx.sim_time_s; returns a
        metering emission when the metering interval elapsed."""
        if dt_s <= 0:
            raise ValueError("dt_s must be > 0")
        now = ctx.sim_time_s
        if self.mode == MODE_OVERRIDE and now >= (self.override_expires or 0):
            self.clear_override()
        if self.mode == MODE_OVERRIDE:
            self.intensity_pct = float(self.override_value)
        else:
            self.intensity_pct = compute_intensity(ctx, self.policy)
        self.cum_energy_wh += self.power_w(self.intensity_pct) * dt_s / 3600.0

        if now - self._last_meter_t >= self.metering_interval_s:
            return self._emit(now)
        return None

    def meter_flush(self, now: int) -> MeterEmission | None:
        """Emit any residual energy delta (end of run)."""
        if self.cum_energy_wh != self._last_meter_cum:
            return self._emit(now)
        return None

    def _emit(self, now: int) -> MeterEmission:
        delta = self.cum_energy_wh - self._last_meter_cum
        self._last_meter_t = now
        self._last_meter_cum = self.cum_energy_wh
        return MeterEmission(self.group_id, now, delta)

    def to_json(self) -> dict:
        return {
            "group_id": self.group_id, "hub_id": self.hub_id,
            "intensity_pct": self.intensity_pct, "mode": self.mode,
            "override_value": self.override_value,
            "override_expires": self.override_expires,
            "p_max_w": self.p_max_w, "cum_energy_wh": self.cum_energy_wh,
        }

    def restore_json(self, data: dict) -> None:
        self.intensity_pct = data["intensity_pct"]
        self.mode = data["mode"]
        self.override_value = data["override_value"]
        self.override_expires = data["override_expires"]
        self.cum_energy_wh = data["cum_energy_wh"]
        self._last_meter_cum = data["cum_energy_wh"]

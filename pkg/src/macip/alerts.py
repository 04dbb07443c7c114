"""Rule-based alerting: predicate rules over readings and detection events,
department routing, an Open -> Acked -> Resolved lifecycle, and automatic
escalation of unacknowledged critical alerts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

SEV_INFO = "info"
SEV_WARNING = "warning"
SEV_CRITICAL = "critical"
_SEV_ORDER = {SEV_INFO: 0, SEV_WARNING: 1, SEV_CRITICAL: 2}

STATUS_OPEN = "open"
STATUS_ACKED = "acked"
STATUS_RESOLVED = "resolved"

TIER_LABELS = ("duty", "supervisor", "director")

DEFAULT_ESCALATION_AFTER_S = 600
DEFAULT_COOLDOWN_S = 1800
MAX_TIER = 2


class UnknownAlert(KeyError):
    pass


class InvalidTransition(ValueError):
    pass


@dataclass(frozen=True)
class AlertRule:
    rule_id: str
    severity: str
    department: str
    sensor_type: str | None = None    # reading rules: sensor type name
    channel: str | None = None        # reading rules: channel name
    op: str = ">="                    # ">=" or "<="
    threshold: float = 0.0
    event_kind: str | None = None     # event rules: detection kind
    cooldown_s: int = DEFAULT_COOLDOWN_S

    def matches_reading(self, sensor_type: str | None, channel: str, value: float) -> bool:
        if self.channel is None or self.channel != channel:
            return False
        if self.sensor_type is not None and self.sensor_type != sensor_type:
            return False
        return value >= self.threshold if self.op == ">=" else value <= self.threshold


def build_default_rules(thresholds: dict | None = None) -> list[AlertRule]:
    t = {"bin_fill_pct": 85.0, "flood_distance_mm": 400.0,
         "co2_warn_ppm": 1000.0, "co2_crit_ppm": 2000.0,
         "cooldown_s": DEFAULT_COOLDOWN_S}
    t.update(thresholds or {})
    cd = int(t["cooldown_s"])
    return [
        AlertRule("bin-full", SEV_WARNING, "sanitation",
                  sensor_type="BinFill", channel="fill_pct",
                  op=">=", threshold=t["bin_fill_pct"], cooldown_s=cd),
        AlertRule("flood-level", SEV_CRITICAL, "emergency",
                  sensor_type="WaterLevel", channel="distance_mm",
                  op="<=", threshold=t["flood_distance_mm"], cooldown_s=cd),
        AlertRule("co2-elevated", SEV_WARNING, "utilities",
                  sensor_type="AirQuality", channel="co2_ppm",
                  op=">=", threshold=t["co2_warn_ppm"], cooldown_s=cd),
        AlertRule("co2-high", SEV_CRITICAL, "utilities",
                  sensor_type="AirQuality", channel="co2_ppm",
                  op=">=", threshold=t["co2_crit_ppm"], cooldown_s=cd),
        AlertRule("abnormal-behaviour", SEV_CRITICAL, "police",
                  event_kind="abnormal", cooldown_s=cd),
        AlertRule("fall-detected", SEV_CRITICAL, "police",
                  event_kind="fall", cooldown_s=cd),
        AlertRule("device-silent", SEV_WARNING, "maintenance", cooldown_s=cd),
    ]


@dataclass
class Alert:
    alert_id: str
    rule_id: str
    source_ref: str
    opened_at: int
    severity: str
    department: str
    status: str = STATUS_OPEN
    escalation_tier: int = 0
    acked_by: str | None = None
    last_escalated_at: int | None = None
    history: list[dict] = field(default_factory=list)

    @property
    def tier_label(self) -> str:
        return TIER_LABELS[self.escalation_tier]

    def to_json(self) -> dict:
        return {
            "alert_id": self.alert_id, "rule_id": self.rule_id,
            "source_ref": self.source_ref, "opened_at": self.opened_at,
            "severity": self.severity, "department": self.department,
            "status": self.status, "escalation_tier": self.escalation_tier,
            "tier_label": self.tier_label, "acked_by": self.acked_by,
            "last_escalated_at": self.last_escalated_at,
            "history": list(self.history),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Alert":
        return cls(alert_id=data["alert_id"], rule_id=data["rule_id"],
                   source_ref=data["source_ref"], opened_at=data["opened_at"],
                   severity=data["severity"], department=data["department"],
                   status=data["status"], escalation_tier=data["escalation_tier"],
                   acked_by=data["acked_by"],
                   last_escalated_at=data["last_escalated_at"],
                   history=list(data["history"]))


class AlertEngine:
    """Single-writer alert state machine.

    `notifier(alert, kind)` is invoked on every transition with kind one of
    alert.opened / alert.escalated / alert.acked / alert.resolved; the
    pipeline hooks persistence and the push stream there.
    """

    def __init__(self, rules: list[AlertRule] | None = None,
                 escalation_after_s: int = DEFAULT_ESCALATION_AFTER_S,
                 notifier: Callable[[Alert, str], None] | None = None):
        self.rules = rules if rules is not None else build_default_rules()
        self.escalation_after_s = escalation_after_s
        self.notifier = notifier or (lambda alert, kind: None)
        self.alerts: dict[str, Alert] = {}
        self._open_by_key: dict[tuple[str, str], str] = {}
        self._last_opened: dict[tuple[str, str], int] = {}
        self._counter = 0

    # ---- evaluation ------------------------------------------------------

    def evaluate_reading(self, sensor_type: str | None, channel: str,
                         value: float, source_ref: str, now: int) -> list[Alert]:
        matched = [r for r in self.rules
                   if r.matches_reading(sensor_type, channel, value)]
        if not matched:
            return []
        # most-severe-match: one alert per channel evaluation
        best = max(matched, key=lambda r: _SEV_ORDER[r.severity])
        return self._open_if_fresh(best, source_ref, now)

    def evaluate_event(self, kind: str, source_ref: str, now: int) -> list[Alert]:
        opened = []
        for rule in self.rules:
            if rule.event_kind == kind:
                opened.extend(self._open_if_fresh(rule, source_ref, now))
        return opened

    def check_silent(self, devices, now: int, factor: float = 3.0) -> list[Alert]:
        """`devices` yields (dev_eui, report_interval_s, last_seen_or_registered)."""
        rule = next(r for r in self.rules if r.rule_id == "device-silent")
        opened = []
        for dev_eui, interval, last in devices:
            if now - last > factor * interval:
                opened.extend(self._open_if_fresh(rule, dev_eui, now))
        return opened

    def _open_if_fresh(self, rule: AlertRule, source_ref: str, now: int) -> list[Alert]:
        key = (rule.rule_id, source_ref)
        if key in self._open_by_key:
            return []
        last = self._last_opened.get(key)
        if last is not None and now - last < rule.cooldown_s:
            return []
        self._counter += 1
        alert = Alert(alert_id=f"AL{self._counter:06d}", rule_id=rule.rule_id,
                      source_ref=source_ref, opened_at=now,
                      severity=rule.severity, department=rule.department)
        alert.history.append({"t": now, "event": "opened"})
        self.alerts[alert.alert_id] = alert
        self._open_by_key[key] = alert.alert_id
        self._last_opened[key] = now
        self.notifier(alert, "alert.opened")
        return [alert]

    # ---- escalation and operator actions ----------------------------------

    def escalate_due(self, now: int) -> list[Alert]:
        escalated = []
        for alert_id in list(self._open_by_key.values()):
            alert = self.alerts[alert_id]
            if alert.severity != SEV_CRITICAL or alert.status != STATUS_OPEN:
                continue
            if alert.escalation_tier >= MAX_TIER:
                continue
            base = alert.opened_at if alert.escalation_tier == 0 else alert.last_escalated_at
            if now - base >= self.escalation_after_s:
                alert.escalation_tier += 1
                alert.last_escalated_at = now
                alert.history.append({"t": now, "event": "escalated",
                                      "tier": alert.escalation_tier})
                self.notifier(alert, "alert.escalated")
                escalated.append(alert)
        return escalated

    def ack(self, alert_id: str, actor: str, now: int) -> Alert:
        alert = self._get(alert_id)
        if alert.status != STATUS_OPEN:
            raise InvalidTransition(f"{alert_id} is {alert.status}, cannot ack")
        alert.status = STATUS_ACKED
        alert.acked_by = actor
        alert.history.append({"t": now, "event": "acked", "actor": actor})
        self._open_by_key.pop((alert.rule_id, alert.source_ref), None)
        self.notifier(alert, "alert.acked")
        return alert

    def resolve(self, alert_id: str, actor: str, now: int) -> Alert:
        alert = self._get(alert_id)
        if alert.status == STATUS_RESOLVED:
            raise InvalidTransition(f"{alert_id} already resolved")
        alert.status = STATUS_RESOLVED
        alert.history.append({"t": now, "event": "resolved", "actor": actor})
        self._open_by_key.pop((alert.rule_id, alert.source_ref), None)
        self.notifier(alert, "alert.resolved")
        return alert

    def _get(self, alert_id: str) -> Alert:
        alert = self.alerts.get(alert_id)
        if alert is None:
            raise UnknownAlert(alert_id)
        return alert

    # ---- queries and persistence -------------------------------------------

    def list_alerts(self, status: str | None = None) -> list[Alert]:
        out = [a for a in self.alerts.values() if status is None or a.status == status]
        return sorted(out, key=lambda a: a.alert_id)

    def counts_by_severity(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for a in self.alerts.values():
            out[a.severity] = out.get(a.severity, 0) + 1
        return dict(sorted(out.items()))

    def restore(self, records: list[dict]) -> None:
        """Rebuild from logged snapshots (one per transition; last wins)."""
        for data in records:
            alert = Alert.from_json(data)
            self.alerts[alert.alert_id] = alert
        for alert in self.alerts.values():
            key = (alert.rule_id, alert.source_ref)
            if alert.status == STATUS_OPEN:
                self._open_by_key[key] = alert.alert_id
            prev = self._last_opened.get(key)
            if prev is None or alert.opened_at > prev:
                self._last_opened[key] = alert.opened_at
            num = int(alert.alert_id[2:])
            self._counter = max(self._counter, num)

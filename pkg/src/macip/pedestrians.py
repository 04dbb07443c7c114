"""Pedestrian monitoring contract: per-interval counts and abnormal-behaviour
events per hub. Camera analytics are out of scope; this module fixes the
shape of their output stream and provides a Poisson stand-in generator."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .alerts import AlertEngine
from .devices import EnvironmentProfile, sample_environment
from .store import CoreStore, UnknownDevice

KIND_COUNT = "count"
KIND_FALL = "fall"
KIND_ABNORMAL = "abnormal"
DETECTION_KINDS = (KIND_COUNT, KIND_FALL, KIND_ABNORMAL)

PED_CHANNEL = "ped_count"
DEFAULT_INTERVAL_S = 300
DEFAULT_ABNORMAL_PROB = 0.001


class UnknownHub(KeyError):
    pass


@dataclass
class DetectionEvent:
    hub_id: str
    sim_time_s: int
    count: int
    kind: str = KIND_COUNT

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.kind not in DETECTION_KINDS:
            raise ValueError(f"kind must be one of {DETECTION_KINDS}")

    @property
    def abnormal(self) -> bool:
        return self.kind != KIND_COUNT


def poisson_draw(rng: random.Random, lam: float) -> int:
    """Knuth's product method; fine for the desk-scale rates used here."""
    if lam <= 0.0:
        return 0
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def simulate_interval(profile: EnvironmentProfile, t: int, interval_s: int,
                      rng: random.Random,
                      abnormal_prob: float = DEFAULT_ABNORMAL_PROB) -> list[DetectionEvent]:
    """Detections for the interval ending at t. Event windows triple the rate
    (via the environment's pedestrian ground truth)."""
    if interval_s <= 0:
        raise ValueError("interval_s must be > 0")
    rate = sample_environment(profile, t).ped_rate_per_hour * interval_s / 3600.0
    events = [DetectionEvent(profile.hub_id, t, poisson_draw(rng, rate))]
    if rng.random() < abnormal_prob:
        kind = KIND_FALL if rng.random() < 0.5 else KIND_ABNORMAL
        events.append(DetectionEvent(profile.hub_id, t, 1, kind))
    return events


def ingest_detection(event: DetectionEvent, hubs: set[str], store: CoreStore,
                     alert_engine: AlertEngine) -> None:
    """Store the count and forward abnormal events to the alert rules."""
    if event.hub_id not in hubs:
        raise UnknownHub(event.hub_id)
    if event.kind == KIND_COUNT:
        try:
            store.append_reading(event.hub_id, PED_CHANNEL, event.sim_time_s,
                                 float(event.count))
        except UnknownDevice as err:
            raise UnknownHub(event.hub_id) from err
    else:
        alert_engine.evaluate_event(event.kind, event.hub_id, event.sim_time_s)


def counts_for(store: CoreStore, hub_id: str, t_from: int, t_to: int,
               agg: str = "raw") -> list[tuple[int, float]]:
    return store.query_range(hub_id, PED_CHANNEL, t_from, t_to, agg)

"""Server-push event bus: monotone event ids, a bounded replay buffer for
reconnecting clients, and per-subscriber bounded queues that degrade to an
explicit gap marker instead of blocking the publisher."""

from __future__ import annotations

import json
import queue
import threading
from collections import deque
from dataclasses import dataclass

REPLAY_BUFFER = 1000
SUBSCRIBER_QUEUE = 1000

KIND_GAP = "gap"


@dataclass(frozen=True)
class PushEvent:
    event_id: int
    kind: str
    payload: dict
    sim_time_s: int

    def sse(self) -> str:
        body = json.dumps({"kind": self.kind, "sim_time_s": self.sim_time_s,
                           "payload": self.payload}, sort_keys=True)
        return f"id: {self.event_id}\nevent: {self.kind}\ndata: {body}\n\n"


def gap_event(last_delivered: int) -> PushEvent:
    """Marker instructing the client to do a full refresh."""
    return PushEvent(last_delivered, KIND_GAP, {"reason": "replay buffer exceeded"}, 0)


class Subscription:
    def __init__(self, bus: "EventBus"):
        self._bus = bus
        self._queue: queue.Queue = queue.Queue(maxsize=SUBSCRIBER_QUEUE)
        self._overflowed = False

    def _offer(self, event: PushEvent) -> None:
        try:
            self._queue.put_nowait(event)
        except queue.Full:
            self._overflowed = True

    def get(self, timeout: float | None = None) -> PushEvent | None:
        """Next event, or None on timeout. After an overflow the next read is
        a gap marker and the stale queue is dropped."""
        if self._overflowed:
            self._overflowed = False
            with self._queue.mutex:
                self._queue.queue.clear()
            return gap_event(-1)
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        self._bus._unsubscribe(self)


class EventBus:
    def __init__(self, replay_buffer: int = REPLAY_BUFFER):
        self._lock = threading.Lock()
        self._buffer: deque[PushEvent] = deque(maxlen=replay_buffer)
        self._subscribers: list[Subscription] = []
        self._next_id = 1

    def publish(self, kind: str, payload: dict, sim_time_s: int) -> PushEvent:
        with self._lock:
            event = PushEvent(self._next_id, kind, payload, sim_time_s)
            self._next_id += 1
            self._buffer.append(event)
            for sub in self._subscribers:
                sub._offer(event)
            return event

    def subscribe(self, last_event_id: int | None = None) -> tuple[Subscription, list[PushEvent]]:
        """Attach a subscriber; returns (subscription, replayed events).

        With a last_event_id still covered by the replay buffer the missed
        events come back in order; beyond the buffer a single gap marker is
        returned instead.
        """
        with self._lock:
            sub = Subscription(self)
            self._subscribers.append(sub)
            if last_event_id is None:
                return sub, []
            replay: list[PushEvent] = []
            if self._buffer and self._buffer[0].event_id > last_event_id + 1:
                return sub, [gap_event(last_event_id)]
            if not self._buffer and last_event_id >= self._next_id:
                return sub, [gap_event(last_event_id)]
            for event in self._buffer:
                if event.event_id > last_event_id:
                    replay.append(event)
            return sub, replay

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    @property
    def last_event_id(self) -> int:
        with self._lock:
            return self._next_id - 1

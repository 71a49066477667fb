"""In-process topic bus: named topics, typed payloads, bounded FIFO fan-out.

The bus is the substrate agents and bridge endpoints attach to. Topics are
path-like names ("/robot1/odom"). Each subscriber owns a bounded FIFO queue;
on overflow the oldest message is dropped and counted. Subscribing to a topic
that has not been advertised yet is allowed (delivery starts when it appears),
which dynamic discovery relies on.

Timestamps are simulated seconds supplied by the caller, never wall clock.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

MAX_PAYLOAD = 16 * 1024 * 1024


class MessageKind(IntEnum):
    POSE = 0
    TWIST = 1
    SCAN2D = 2
    POINTCLOUD = 3
    COMMAND = 4
    BLOB = 5


class InvalidTopic(ValueError):
    """Topic name violates the naming invariants."""


class KindMismatch(ValueError):
    """Topic already advertised with a different message kind."""


def validate_topic(name: str) -> str:
    if not name or not name.startswith("/"):
        raise InvalidTopic(f"topic {name!r} must be non-empty and start with '/'")
    if any(ch.isspace() for ch in name):
        raise InvalidTopic(f"topic {name!r} must not contain whitespace")
    return name


@dataclass(frozen=True)
class Message:
    """One payload on one topic at one simulated instant.

    `origin` identifies the publishing endpoint for bridge loop suppression;
    it never crosses the wire.
    """

    topic: str
    payload: bytes
    publish_time: float
    kind: MessageKind
    origin: str | None = None

    def __post_init__(self) -> None:
        validate_topic(self.topic)
        if len(self.payload) > MAX_PAYLOAD:
            raise ValueError(f"payload of {len(self.payload)} bytes exceeds 16 MiB")


class Subscription:
    """Single-consumer FIFO queue bound to one topic."""

    def __init__(self, topic: str, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.topic = topic
        self.capacity = capacity
        self.drops = 0
        self.received = 0
        self._queue: deque[Message] = deque()

    def _push(self, msg: Message) -> None:
        if len(self._queue) >= self.capacity:
            self._queue.popleft()
            self.drops += 1
        self._queue.append(msg)
        self.received += 1

    def pop(self) -> Message | None:
        return self._queue.popleft() if self._queue else None

    def drain(self) -> list[Message]:
        out = list(self._queue)
        self._queue.clear()
        return out

    def __len__(self) -> int:
        return len(self._queue)

    @property
    def delivered(self) -> int:
        """Messages that made it into the queue (received minus overflowed)."""
        return self.received - self.drops


class Publisher:
    """Handle for publishing to one advertised topic.

    Enforces monotone non-decreasing publish_time per handle.
    """

    def __init__(self, bus: "TopicBus", topic: str, kind: MessageKind) -> None:
        self._bus = bus
        self.topic = topic
        self.kind = kind
        self._last_time: float | None = None

    def publish(self, payload: bytes, publish_time: float, origin: str | None = None) -> Message:
        if self._last_time is not None and publish_time < self._last_time:
            raise ValueError(
                f"publish_time {publish_time} regresses below {self._last_time} on {self.topic}"
            )
        self._last_time = publish_time
        msg = Message(self.topic, payload, publish_time, self.kind, origin)
        self._bus._dispatch(msg)
        return msg


@dataclass
class BusStats:
    publish_counts: dict[str, int] = field(default_factory=dict)
    subscriber_counts: dict[str, int] = field(default_factory=dict)
    queue_depths: dict[str, list[int]] = field(default_factory=dict)


class TopicBus:
    """Shareable in-process pub/sub bus with per-subscriber FIFO queues."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._kinds: dict[str, MessageKind] = {}
        self._subs: dict[str, list[Subscription]] = {}
        self._publish_counts: dict[str, int] = {}

    def advertise(self, topic: str, kind: MessageKind) -> Publisher:
        validate_topic(topic)
        with self._lock:
            existing = self._kinds.get(topic)
            if existing is not None and existing != kind:
                raise KindMismatch(
                    f"topic {topic!r} already advertised as {existing.name}, not {kind.name}"
                )
            self._kinds[topic] = kind
            return Publisher(self, topic, kind)

    def subscribe(self, topic: str, queue_capacity: int) -> Subscription:
        validate_topic(topic)
        with self._lock:
            sub = Subscription(topic, queue_capacity)
            self._subs.setdefault(topic, []).append(sub)
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            subs = self._subs.get(sub.topic, [])
            if sub in subs:
                subs.remove(sub)

    def list_topics(self) -> set[tuple[str, MessageKind]]:
        with self._lock:
            return {(name, kind) for name, kind in self._kinds.items()}

    def kind_of(self, topic: str) -> MessageKind | None:
        with self._lock:
            return self._kinds.get(topic)

    def _dispatch(self, msg: Message) -> None:
        with self._lock:
            self._publish_counts[msg.topic] = self._publish_counts.get(msg.topic, 0) + 1
            for sub in self._subs.get(msg.topic, ()):
                sub._push(msg)

    def stats(self) -> BusStats:
        with self._lock:
            return BusStats(
                publish_counts=dict(self._publish_counts),
                subscriber_counts={t: len(s) for t, s in self._subs.items()},
                queue_depths={t: [len(q) for q in s] for t, s in self._subs.items()},
            )

"""Deterministic discrete-event network simulation.

Provides the simulation clock used by every other component, piecewise-constant
time profiles, and a point-to-point impaired link with time-varying latency,
probabilistic loss, a bandwidth cap, and scripted disconnect windows.

Determinism contract: identical (seed, profiles, input schedule) produce
byte-identical event traces. The loss RNG draws exactly one uniform per send,
whether or not the draw is consumed, so profile changes never desynchronize
the random stream.
"""

from __future__ import annotations

import itertools
import heapq
import random
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable


class PiecewiseConstant:
    """Right-continuous step function over simulated time.

    Defined by (t, value) breakpoints; the value at time t is the value of the
    latest breakpoint <= t. Before the first breakpoint the first value holds.
    """

    __slots__ = ("_times", "_values")

    def __init__(self, points: Iterable[tuple[float, float]] | float):
        if isinstance(points, (int, float)):
            points = [(0.0, float(points))]
        pts = sorted((float(t), float(v)) for t, v in points)
        if not pts:
            raise ValueError("profile needs at least one breakpoint")
        self._times = [t for t, _ in pts]
        self._values = [v for _, v in pts]

    def value_at(self, t: float) -> float:
        idx = bisect_right(self._times, t) - 1
        return self._values[max(idx, 0)]

    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self._times, self._values))

    def __call__(self, t: float) -> float:
        return self.value_at(t)


class SimClock:
    """Simulated-time event queue.

    Events fire in (time, insertion order); time never moves backwards.
    Callbacks may schedule further events, including at the current time.
    """

    def __init__(self) -> None:
        self.now = 0.0
        self._heap: list[tuple[float, int, Callable[[], None], Any]] = []
        self._seq = itertools.count()

    def schedule(self, at: float, callback: Callable[[], None], tag: Any = None) -> None:
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        heapq.heappush(self._heap, (at, next(self._seq), callback, tag))

    def advance(self, dt: float) -> list[tuple[float, Any]]:
        """Advance by dt >= 0, firing every event due on the way.

        Returns the (time, tag) of each fired event, in firing order. dt = 0
        fires only events due exactly now.
        """
        if dt < 0:
            raise ValueError("dt must be >= 0")
        target = self.now + dt
        fired: list[tuple[float, Any]] = []
        while self._heap and self._heap[0][0] <= target:
            at, _, callback, tag = heapq.heappop(self._heap)
            self.now = at
            fired.append((at, tag))
            callback()
        self.now = target
        return fired

    def run_until(self, t: float) -> list[tuple[float, Any]]:
        if t < self.now:
            raise ValueError("cannot run backwards")
        return self.advance(t - self.now)

    def pending(self) -> int:
        return len(self._heap)


@dataclass(frozen=True)
class NetworkConditions:
    """Time-varying impairments for one link direction.

    latency/loss are piecewise-constant profiles; bandwidth_cap is bytes per
    second (None = uncapped); disconnect windows are sorted, non-overlapping
    [start, end) intervals during which every send is dropped.
    """

    latency: PiecewiseConstant
    loss: PiecewiseConstant
    bandwidth_cap: float | None = None
    disconnects: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        for t, v in self.latency.breakpoints():
            if v < 0:
                raise ValueError(f"latency {v} at t={t} must be >= 0")
        for t, v in self.loss.breakpoints():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"loss {v} at t={t} must be in [0, 1]")
        if self.bandwidth_cap is not None and self.bandwidth_cap <= 0:
            raise ValueError("bandwidth_cap must be positive or None")
        prev_end = None
        for start, end in self.disconnects:
            if end <= start:
                raise ValueError(f"disconnect window [{start}, {end}) is empty")
            if prev_end is not None and start < prev_end:
                raise ValueError("disconnect windows must be sorted and disjoint")
            prev_end = end

    def in_disconnect(self, t: float) -> bool:
        for start, end in self.disconnects:
            if start <= t < end:
                return True
            if t < start:
                break
        return False

    @staticmethod
    def ideal() -> "NetworkConditions":
        return NetworkConditions(PiecewiseConstant(0.0), PiecewiseConstant(0.0))


class Outcome(Enum):
    DELIVERED = "delivered"
    DEFERRED = "deferred"
    DROPPED = "dropped"


@dataclass(frozen=True)
class SendOutcome:
    """Result of one send: whether it was scheduled and when it will land."""

    kind: Outcome
    deliver_at: float | None = None
    reason: str = ""

    @property
    def dropped(self) -> bool:
        return self.kind is Outcome.DROPPED


@dataclass(frozen=True)
class TraceEvent:
    kind: Outcome
    t_send: float
    size: int
    deliver_at: float | None
    reason: str = ""


class NetLink:
    """One direction of an impaired point-to-point link.

    Packets are atomic: a send is either dropped at send time or delivered
    whole at t + L(t) + size/bandwidth, serialized FIFO behind earlier
    traffic. There is no reordering; loss and disconnection are the only
    impairments.
    """

    def __init__(
        self,
        clock: SimClock,
        conditions: NetworkConditions,
        seed: int,
        on_deliver: Callable[[bytes, float], None] | None = None,
        name: str = "link",
    ) -> None:
        self.clock = clock
        self.conditions = conditions
        self.name = name
        self.on_deliver = on_deliver
        self.closed = False
        self._rng = random.Random(seed)
        self._free_at = 0.0
        self._in_flight: dict[int, bytes] = {}
        self._flight_seq = itertools.count()
        self._trace: list[TraceEvent] = []

    def send(self, payload: bytes, t_now: float | None = None) -> SendOutcome:
        t = self.clock.now if t_now is None else t_now
        draw = self._rng.random()
        size = len(payload)
        if self.closed:
            return self._drop(t, size, "closed")
        if self.conditions.in_disconnect(t):
            return self._drop(t, size, "disconnect")
        if draw < self.conditions.loss.value_at(t):
            return self._drop(t, size, "loss")

        cap = self.conditions.bandwidth_cap
        serialization = (size / cap) if cap else 0.0
        start = max(t, self._free_at)
        done = start + serialization
        self._free_at = done
        deliver_at = done + self.conditions.latency.value_at(t)

        flight_id = next(self._flight_seq)
        self._in_flight[flight_id] = payload

        def _deliver() -> None:
            self._in_flight.pop(flight_id, None)
            if self.on_deliver is not None:
                self.on_deliver(payload, deliver_at)

        self.clock.schedule(deliver_at, _deliver, tag=(self.name, "deliver"))
        kind = Outcome.DELIVERED if start == t else Outcome.DEFERRED
        self._trace.append(TraceEvent(kind, t, size, deliver_at))
        return SendOutcome(kind, deliver_at)

    def _drop(self, t: float, size: int, reason: str) -> SendOutcome:
        self._trace.append(TraceEvent(Outcome.DROPPED, t, size, None, reason))
        return SendOutcome(Outcome.DROPPED, None, reason)

    def close(self) -> None:
        self.closed = True

    def in_flight(self) -> list[bytes]:
        """Payloads scheduled but not yet delivered (for end-of-run audits)."""
        return list(self._in_flight.values())


def replay_trace(link: NetLink) -> list[TraceEvent]:
    """Ordered log of every send with its outcome; one entry per send call."""
    return list(link._trace)


def link_pair(
    clock: SimClock,
    conditions: NetworkConditions,
    seed: int,
    reverse_conditions: NetworkConditions | None = None,
) -> tuple[NetLink, NetLink]:
    """Two directions of a link between endpoint peers, independently seeded."""
    fwd = NetLink(clock, conditions, seed ^ 0x5BD1E995, name="fwd")
    rev = NetLink(clock, reverse_conditions or conditions, seed ^ 0x27D4EB2F, name="rev")
    return fwd, rev
